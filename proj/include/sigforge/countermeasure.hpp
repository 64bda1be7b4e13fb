#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sigforge/attack.hpp"
#include "sigforge/corpus.hpp"
#include "sigforge/generative.hpp"
#include "sigforge/verifier.hpp"

namespace sigforge {

enum class AssistKind { kRandom, kVae, kCgan, kVaeSsi };
std::string to_string(AssistKind a);
AssistKind assist_kind_from_string(const std::string& s);
// Model tag: random_assisted, vae_assisted, cgan_assisted, vae_ssi_assisted.
std::string assist_tag(AssistKind a);

struct RetrainPlan {
    AssistKind assist = AssistKind::kRandom;
    int random_count = 64;                    // random assist: fresh draws
    const SyntheticSet* synthetic = nullptr;  // generated assists, train partition only
    double mix_ratio = 1.0;  // fraction of the available augmentation used
    VerifierHyper hyper;
    std::uint64_t seed = 0;
    bool warm_start = false;
    int image_size = 64;

    void validate() const;
};

// Union of the user's original train samples and the augmentation samples,
// all augmentation labeled forged. Augmentation images go through the same
// preprocess path the attack will use. Test-partition synthetic input is a
// leakage error; an empty augmentation is rejected.
std::vector<SignatureSample> build_retrain_set(
    const std::vector<SignatureSample>& user_train_samples, const RetrainPlan& plan,
    int user_id);

// Head retrained from fresh initialization (or warm-started from `base` when
// the plan says so) on the augmented set; the extractor is untouched.
VerifierModel retrain_verifier(const VerifierModel& base,
                               const std::vector<SignatureSample>& user_train_samples,
                               const RetrainPlan& plan);

struct CellDelta {
    std::string model_tag_before;
    std::string model_tag_after;
    int user_id = 0;
    std::string scenario;
    std::optional<double> far_delta;  // after - before
    std::optional<double> frr_delta;
};

struct ComparisonReport {
    std::vector<CellDelta> deltas;
    std::optional<double> aggregate_far_delta_pooled;
    std::optional<double> aggregate_frr_delta_pooled;
    // Cells where FRR worsened by more than the guardrail (default 5 points).
    std::vector<std::string> frr_guardrail_flags;
    double frr_guardrail = 0.05;
};

// Matches cells by (user, scenario); the model tags may differ (hardened
// models carry assist tags). Throws listing the symmetric difference when
// the two reports do not cover the same cells.
ComparisonReport compare_reports(const EvalReport& before, const EvalReport& after,
                                 double frr_guardrail = 0.05);

void save_comparison(const ComparisonReport& report, const std::filesystem::path& path);

}  // namespace sigforge
