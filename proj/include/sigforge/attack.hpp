#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sigforge/corpus.hpp"
#include "sigforge/generative.hpp"
#include "sigforge/verifier.hpp"

namespace sigforge {

// One verify() call, enough to recompute every reported rate.
struct DecisionRecord {
    std::string model_tag;
    int user_id = 0;
    std::string scenario;
    std::size_t sample_index = 0;
    bool genuine_trial = false;  // true for FRR trials, false for impostor trials
    bool accepted = false;
    double genuine_score = 0.0;
    double impostor_score = 0.0;
};

struct EvalMetrics {
    std::optional<double> far;
    std::optional<double> frr;
    std::size_t impostor_attempts = 0;
    std::size_t impostor_accepted = 0;
    std::size_t genuine_attempts = 0;
    std::size_t genuine_rejected = 0;
};

// (far + frr) / 2; both rates must be present.
double hter(const EvalMetrics& metrics);

struct AttackScenario {
    enum class Kind { kVanilla, kRandom, kGenerative };

    Kind kind = Kind::kVanilla;
    std::string tag = "vanilla";
    int random_count = 5000;              // random kind
    const SyntheticSet* synthetic = nullptr;  // generative kind, test partition only

    static AttackScenario vanilla();
    static AttackScenario random_images(int count);
    static AttackScenario generative(const SyntheticSet& set, std::string tag);
};

struct EvalCell {
    std::string model_tag;
    int user_id = 0;
    std::string scenario;
    EvalMetrics metrics;
};

// Per-scenario aggregate, reported both ways since the paper does not say
// whether it pools attempts or averages users.
struct ScenarioAggregate {
    std::string scenario;
    std::optional<double> far_pooled;
    std::optional<double> far_user_mean;
    std::optional<double> frr_pooled;
    std::optional<double> frr_user_mean;
    std::size_t impostor_attempts = 0;
    std::size_t genuine_attempts = 0;
};

struct EvalReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::vector<EvalCell> cells;
    std::vector<ScenarioAggregate> aggregates;
    std::vector<DecisionRecord> decisions;

    const EvalCell& cell(const std::string& model_tag, const std::string& scenario) const;
    const ScenarioAggregate& aggregate(const std::string& scenario) const;
    // Recomputes every cell's rates from the decision log and throws if any
    // reported value disagrees.
    void check_against_decisions() const;
};

// FRR on the model's genuine test samples (preprocessed corpus).
EvalMetrics eval_genuine(const BlackBoxVerifier& model,
                         const std::vector<const SignatureSample*>& genuine_test,
                         std::vector<DecisionRecord>* log = nullptr);

// FAR under one scenario. Vanilla draws the model user's test-split human
// forgeries from `corpus_test_forgeries`; random generates `random_count`
// images on demand and pushes them through the standard preprocess path;
// generative uses the scenario's test-partition synthetic set filtered to
// the model's user. Train-partition synthetic input is a leakage error.
EvalMetrics run_attack(const BlackBoxVerifier& model, const AttackScenario& scenario,
                       const std::vector<const SignatureSample*>& corpus_test_forgeries,
                       int image_size, std::uint64_t seed,
                       std::vector<DecisionRecord>* log = nullptr);

struct CampaignConfig {
    int image_size = 64;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string config_hash;
};

// Full cross product (model x scenario) plus the genuine FRR column for the
// vanilla scenario; deterministic for fixed seeds regardless of jobs.
EvalReport run_campaign(const std::vector<const BlackBoxVerifier*>& models,
                        const std::vector<AttackScenario>& scenarios,
                        const std::vector<SignatureSample>& preprocessed_corpus,
                        const CampaignConfig& cfg);

void save_report(const EvalReport& report, const std::filesystem::path& report_path,
                 const std::filesystem::path& decisions_path);
EvalReport load_report(const std::filesystem::path& report_path,
                       const std::filesystem::path& decisions_path = {});

}  // namespace sigforge
