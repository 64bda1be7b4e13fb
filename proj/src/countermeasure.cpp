#include "sigforge/countermeasure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "sigforge/errors.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

std::string to_string(AssistKind a) {
    switch (a) {
        case AssistKind::kRandom: return "random";
        case AssistKind::kVae: return "vae";
        case AssistKind::kCgan: return "cgan";
        case AssistKind::kVaeSsi: return "vae-ssi";
    }
    return "?";
}

AssistKind assist_kind_from_string(const std::string& s) {
    if (s == "random") return AssistKind::kRandom;
    if (s == "vae") return AssistKind::kVae;
    if (s == "cgan") return AssistKind::kCgan;
    if (s == "vae-ssi" || s == "vae_ssi") return AssistKind::kVaeSsi;
    throw ValidationError("unknown assist kind '" + s + "'");
}

std::string assist_tag(AssistKind a) {
    switch (a) {
        case AssistKind::kRandom: return "random_assisted";
        case AssistKind::kVae: return "vae_assisted";
        case AssistKind::kCgan: return "cgan_assisted";
        case AssistKind::kVaeSsi: return "vae_ssi_assisted";
    }
    return "?";
}

void RetrainPlan::validate() const {
    if (mix_ratio <= 0.0 || mix_ratio > 1.0)
        throw ValidationError("RetrainPlan: mix_ratio must be in (0,1]");
    if (assist == AssistKind::kRandom) {
        if (random_count < 1)
            throw ValidationError("RetrainPlan: random assist needs a positive count; "
                                  "a plan with zero augmentation is not a countermeasure run");
    } else if (!synthetic) {
        throw ValidationError("RetrainPlan: " + to_string(assist) +
                              " assist needs a synthetic set");
    }
    if (image_size < 16) throw ValidationError("RetrainPlan: image_size must be >= 16");
}

std::vector<SignatureSample> build_retrain_set(
    const std::vector<SignatureSample>& user_train_samples, const RetrainPlan& plan,
    int user_id) {
    plan.validate();
    std::vector<SignatureSample> out = user_train_samples;

    std::vector<SignatureSample> augmentation;
    if (plan.assist == AssistKind::kRandom) {
        for (int i = 0; i < plan.random_count; ++i) {
            const std::uint64_t draw_seed =
                derive_seed(plan.seed, "random-retrain",
                            (static_cast<std::uint64_t>(user_id) << 32) |
                                static_cast<std::uint64_t>(i));
            SignatureSample s;
            s.image = preprocess(random_signature(plan.image_size, plan.image_size, draw_seed),
                                 plan.image_size);
            s.user_id = user_id;
            s.label = Label::kForged;
            s.provenance = Provenance::kRandom;
            s.split = Split::kTrain;
            augmentation.push_back(std::move(s));
        }
    } else {
        for (const auto& s : plan.synthetic->samples) {
            if (s.partition != Split::kTrain)
                throw LeakageError("build_retrain_set: synthetic sample from the test "
                                   "partition (reference " +
                                   std::to_string(s.reference_index) +
                                   "); retraining may only use the train partition");
            if (s.user_id != user_id) continue;
            SignatureSample sample;
            sample.image = preprocess(s.image, plan.image_size);
            sample.user_id = user_id;
            sample.label = Label::kForged;  // augmentation always carries impostor targets
            sample.provenance = s.provenance;
            sample.split = Split::kTrain;
            augmentation.push_back(std::move(sample));
        }
        if (augmentation.empty())
            throw ValidationError("build_retrain_set: no train-partition synthetic samples "
                                  "for user " +
                                  std::to_string(user_id));
    }

    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::floor(plan.mix_ratio * static_cast<double>(augmentation.size()))));
    augmentation.resize(std::min(take, augmentation.size()));
    out.insert(out.end(), augmentation.begin(), augmentation.end());
    return out;
}

VerifierModel retrain_verifier(const VerifierModel& base,
                               const std::vector<SignatureSample>& user_train_samples,
                               const RetrainPlan& plan) {
    const auto retrain_set = build_retrain_set(user_train_samples, plan, base.user_id());
    if (plan.warm_start) {
        // Continue from the existing head instead of fresh initialization.
        Network head = base.head();
        std::vector<std::vector<double>> feats;
        std::vector<std::vector<double>> targets;
        for (const auto& s : retrain_set) {
            feats.push_back(base.extractor().features(s.image));
            targets.push_back(s.label == Label::kGenuine ? std::vector<double>{1.0, 0.0}
                                                         : std::vector<double>{0.0, 1.0});
        }
        std::vector<std::size_t> order(feats.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(plan.seed, "retrain-shuffle"));
        std::vector<double> trace;
        for (int epoch = 0; epoch < plan.hyper.epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.below(i)]);
            double epoch_loss = 0.0;
            for (std::size_t i : order) {
                const auto [loss, grad] = loss_and_grad(head, feats[i], targets[i], LossKind::kBce);
                epoch_loss += loss.total;
                head = sgd_momentum_step(std::move(head), grad, plan.hyper.lr, plan.hyper.momentum);
            }
            trace.push_back(epoch_loss / static_cast<double>(feats.size()));
        }
        return VerifierModel(base.user_id(), base.extractor_ptr(), std::move(head), plan.seed,
                             assist_tag(plan.assist), std::move(trace));
    }
    return train_verifier(retrain_set, base.extractor_ptr(), plan.hyper, plan.seed,
                          assist_tag(plan.assist));
}

ComparisonReport compare_reports(const EvalReport& before, const EvalReport& after,
                                 double frr_guardrail) {
    using Key = std::pair<int, std::string>;  // (user, scenario)
    std::map<Key, const EvalCell*> before_cells, after_cells;
    for (const auto& c : before.cells) before_cells[{c.user_id, c.scenario}] = &c;
    for (const auto& c : after.cells) after_cells[{c.user_id, c.scenario}] = &c;

    std::string missing;
    for (const auto& [key, cell] : before_cells)
        if (!after_cells.count(key))
            missing += " -(" + std::to_string(key.first) + "," + key.second + ")";
    for (const auto& [key, cell] : after_cells)
        if (!before_cells.count(key))
            missing += " +(" + std::to_string(key.first) + "," + key.second + ")";
    if (!missing.empty())
        throw ValidationError("compare_reports: cell sets differ:" + missing);

    ComparisonReport report;
    report.frr_guardrail = frr_guardrail;
    for (const auto& [key, b] : before_cells) {
        const EvalCell* a = after_cells.at(key);
        CellDelta d;
        d.model_tag_before = b->model_tag;
        d.model_tag_after = a->model_tag;
        d.user_id = key.first;
        d.scenario = key.second;
        if (b->metrics.far && a->metrics.far) d.far_delta = *a->metrics.far - *b->metrics.far;
        if (b->metrics.frr && a->metrics.frr) {
            d.frr_delta = *a->metrics.frr - *b->metrics.frr;
            if (*d.frr_delta > frr_guardrail)
                report.frr_guardrail_flags.push_back("user " + std::to_string(key.first) +
                                                     " scenario " + key.second);
        }
        report.deltas.push_back(std::move(d));
    }

    const auto agg_delta = [](const std::optional<double>& a, const std::optional<double>& b)
        -> std::optional<double> {
        if (a && b) return *a - *b;
        return std::nullopt;
    };
    // paired scenario aggregates, pooled form
    for (const auto& agg_before : before.aggregates) {
        for (const auto& agg_after : after.aggregates) {
            if (agg_before.scenario != agg_after.scenario) continue;
            if (auto d = agg_delta(agg_after.far_pooled, agg_before.far_pooled)) {
                report.aggregate_far_delta_pooled =
                    report.aggregate_far_delta_pooled.value_or(0.0) + *d;
            }
            if (auto d = agg_delta(agg_after.frr_pooled, agg_before.frr_pooled)) {
                report.aggregate_frr_delta_pooled =
                    report.aggregate_frr_delta_pooled.value_or(0.0) + *d;
            }
        }
    }
    return report;
}

void save_comparison(const ComparisonReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    for (const auto& d : report.deltas) {
        nlohmann::json j;
        j["record"] = "delta";
        j["user_id"] = d.user_id;
        j["scenario"] = d.scenario;
        j["model_before"] = d.model_tag_before;
        j["model_after"] = d.model_tag_after;
        if (d.far_delta) j["far_delta"] = *d.far_delta;
        if (d.frr_delta) j["frr_delta"] = *d.frr_delta;
        out << j.dump() << "\n";
    }
    nlohmann::json summary;
    summary["record"] = "summary";
    summary["frr_guardrail"] = report.frr_guardrail;
    summary["frr_guardrail_flags"] = report.frr_guardrail_flags;
    if (report.aggregate_far_delta_pooled)
        summary["aggregate_far_delta_pooled"] = *report.aggregate_far_delta_pooled;
    if (report.aggregate_frr_delta_pooled)
        summary["aggregate_frr_delta_pooled"] = *report.aggregate_frr_delta_pooled;
    out << summary.dump() << "\n";
}

}  // namespace sigforge
