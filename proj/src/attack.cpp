#include "sigforge/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "sigforge/errors.hpp"
#include "sigforge/parallel.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

double hter(const EvalMetrics& metrics) {
    if (!metrics.far || !metrics.frr)
        throw ValidationError("hter: both FAR and FRR must be present");
    return (*metrics.far + *metrics.frr) / 2.0;
}

AttackScenario AttackScenario::vanilla() {
    AttackScenario s;
    s.kind = Kind::kVanilla;
    s.tag = "vanilla";
    return s;
}

AttackScenario AttackScenario::random_images(int count) {
    AttackScenario s;
    s.kind = Kind::kRandom;
    s.tag = "random";
    s.random_count = count;
    return s;
}

AttackScenario AttackScenario::generative(const SyntheticSet& set, std::string tag) {
    AttackScenario s;
    s.kind = Kind::kGenerative;
    s.tag = std::move(tag);
    s.synthetic = &set;
    return s;
}

EvalMetrics eval_genuine(const BlackBoxVerifier& model,
                         const std::vector<const SignatureSample*>& genuine_test,
                         std::vector<DecisionRecord>* log) {
    if (genuine_test.empty())
        throw ValidationError("eval_genuine: empty genuine test set for user " +
                              std::to_string(model.user_id()));
    EvalMetrics m;
    for (std::size_t i = 0; i < genuine_test.size(); ++i) {
        const Decision d = model.verify(genuine_test[i]->image);
        m.genuine_attempts++;
        m.genuine_rejected += d.accepted ? 0 : 1;
        if (log)
            log->push_back({model.tag(), model.user_id(), "vanilla", i, true, d.accepted,
                            d.genuine_score, d.impostor_score});
    }
    m.frr = static_cast<double>(m.genuine_rejected) / static_cast<double>(m.genuine_attempts);
    return m;
}

EvalMetrics run_attack(const BlackBoxVerifier& model, const AttackScenario& scenario,
                       const std::vector<const SignatureSample*>& corpus_test_forgeries,
                       int image_size, std::uint64_t seed,
                       std::vector<DecisionRecord>* log) {
    EvalMetrics m;
    const auto try_impostor = [&](const GrayImage& image, std::size_t index) {
        const Decision d = model.verify(image);
        m.impostor_attempts++;
        m.impostor_accepted += d.accepted ? 1 : 0;
        if (log)
            log->push_back({model.tag(), model.user_id(), scenario.tag, index, false, d.accepted,
                            d.genuine_score, d.impostor_score});
    };

    switch (scenario.kind) {
        case AttackScenario::Kind::kVanilla: {
            if (corpus_test_forgeries.empty())
                throw ValidationError("run_attack: no test forgeries for user " +
                                      std::to_string(model.user_id()));
            for (std::size_t i = 0; i < corpus_test_forgeries.size(); ++i)
                try_impostor(corpus_test_forgeries[i]->image, i);
            break;
        }
        case AttackScenario::Kind::kRandom: {
            if (scenario.random_count < 1)
                throw ValidationError("run_attack: random scenario needs a positive count");
            for (int i = 0; i < scenario.random_count; ++i) {
                const std::uint64_t draw_seed =
                    derive_seed(seed, "random-attack",
                                (static_cast<std::uint64_t>(model.user_id()) << 32) |
                                    static_cast<std::uint64_t>(i));
                const GrayImage raw = random_signature(image_size, image_size, draw_seed);
                try_impostor(preprocess(raw, image_size), static_cast<std::size_t>(i));
            }
            break;
        }
        case AttackScenario::Kind::kGenerative: {
            if (!scenario.synthetic)
                throw ValidationError("run_attack: generative scenario without a synthetic set");
            std::size_t index = 0;
            for (const auto& s : scenario.synthetic->samples) {
                if (s.partition != Split::kTest)
                    throw LeakageError("run_attack: scenario '" + scenario.tag +
                                       "' contains a train-partition synthetic sample "
                                       "(reference " +
                                       std::to_string(s.reference_index) +
                                       "); attacks may only use the test partition");
                if (s.user_id != model.user_id()) continue;
                try_impostor(preprocess(s.image, image_size), index++);
            }
            if (m.impostor_attempts == 0)
                throw ValidationError("run_attack: scenario '" + scenario.tag +
                                      "' has no samples for user " +
                                      std::to_string(model.user_id()));
            break;
        }
    }
    m.far = static_cast<double>(m.impostor_accepted) / static_cast<double>(m.impostor_attempts);
    return m;
}

const EvalCell& EvalReport::cell(const std::string& model_tag,
                                 const std::string& scenario) const {
    for (const auto& c : cells)
        if (c.model_tag == model_tag && c.scenario == scenario) return c;
    throw ValidationError("EvalReport: no cell (" + model_tag + ", " + scenario + ")");
}

const ScenarioAggregate& EvalReport::aggregate(const std::string& scenario) const {
    for (const auto& a : aggregates)
        if (a.scenario == scenario) return a;
    throw ValidationError("EvalReport: no aggregate for scenario " + scenario);
}

void EvalReport::check_against_decisions() const {
    struct Tally {
        std::size_t imp_attempts = 0, imp_accepted = 0, gen_attempts = 0, gen_rejected = 0;
    };
    std::map<std::pair<std::string, std::string>, Tally> tallies;
    for (const auto& d : decisions) {
        Tally& t = tallies[{d.model_tag, d.scenario}];
        if (d.genuine_trial) {
            t.gen_attempts++;
            t.gen_rejected += d.accepted ? 0 : 1;
        } else {
            t.imp_attempts++;
            t.imp_accepted += d.accepted ? 1 : 0;
        }
    }
    for (const auto& c : cells) {
        const Tally& t = tallies[{c.model_tag, c.scenario}];
        if (c.metrics.far) {
            if (t.imp_attempts != c.metrics.impostor_attempts)
                throw ValidationError("report/decision-log mismatch: attempts for (" +
                                      c.model_tag + ", " + c.scenario + ")");
            const double far =
                static_cast<double>(t.imp_accepted) / static_cast<double>(t.imp_attempts);
            if (std::fabs(far - *c.metrics.far) > 1e-12)
                throw ValidationError("report/decision-log mismatch: FAR for (" + c.model_tag +
                                      ", " + c.scenario + ")");
        }
        if (c.metrics.frr) {
            const double frr =
                static_cast<double>(t.gen_rejected) / static_cast<double>(t.gen_attempts);
            if (std::fabs(frr - *c.metrics.frr) > 1e-12)
                throw ValidationError("report/decision-log mismatch: FRR for (" + c.model_tag +
                                      ", " + c.scenario + ")");
        }
    }
}

EvalReport run_campaign(const std::vector<const BlackBoxVerifier*>& models,
                        const std::vector<AttackScenario>& scenarios,
                        const std::vector<SignatureSample>& preprocessed_corpus,
                        const CampaignConfig& cfg) {
    if (models.empty() || scenarios.empty())
        throw ValidationError("run_campaign: need at least one model and one scenario");

    // Per-user views into the corpus.
    std::map<int, std::vector<const SignatureSample*>> test_forgeries, test_genuine;
    for (const auto& s : preprocessed_corpus) {
        if (s.split != Split::kTest) continue;
        (s.label == Label::kForged ? test_forgeries : test_genuine)[s.user_id].push_back(&s);
    }

    struct CellResult {
        EvalCell cell;
        std::vector<DecisionRecord> log;
    };
    const std::size_t n_cells = models.size() * scenarios.size();
    std::vector<CellResult> results(n_cells);
    parallel_for(n_cells, cfg.jobs, [&](std::size_t idx) {
        const BlackBoxVerifier& model = *models[idx / scenarios.size()];
        const AttackScenario& scenario = scenarios[idx % scenarios.size()];
        CellResult& r = results[idx];
        r.cell.model_tag = model.tag();
        r.cell.user_id = model.user_id();
        r.cell.scenario = scenario.tag;
        try {
            const auto forgeries_it = test_forgeries.find(model.user_id());
            static const std::vector<const SignatureSample*> kNone;
            const auto& forgeries =
                forgeries_it == test_forgeries.end() ? kNone : forgeries_it->second;
            r.cell.metrics =
                run_attack(model, scenario, forgeries, cfg.image_size, cfg.seed, &r.log);
            if (scenario.kind == AttackScenario::Kind::kVanilla) {
                const auto genuine_it = test_genuine.find(model.user_id());
                const EvalMetrics frr_part = eval_genuine(
                    model, genuine_it == test_genuine.end() ? kNone : genuine_it->second, &r.log);
                r.cell.metrics.frr = frr_part.frr;
                r.cell.metrics.genuine_attempts = frr_part.genuine_attempts;
                r.cell.metrics.genuine_rejected = frr_part.genuine_rejected;
            }
        } catch (const Error& e) {
            throw Error("campaign cell (model " + model.tag() + ", scenario " + scenario.tag +
                        "): " + e.what());
        }
    });

    EvalReport report;
    report.config_hash = cfg.config_hash;
    report.seed = cfg.seed;
    for (auto& r : results) {
        report.cells.push_back(std::move(r.cell));
        report.decisions.insert(report.decisions.end(), r.log.begin(), r.log.end());
    }

    for (const auto& scenario : scenarios) {
        ScenarioAggregate agg;
        agg.scenario = scenario.tag;
        std::size_t imp_acc = 0, gen_rej = 0;
        double far_sum = 0.0, frr_sum = 0.0;
        std::size_t far_users = 0, frr_users = 0;
        for (const auto& c : report.cells) {
            if (c.scenario != scenario.tag) continue;
            if (c.metrics.far) {
                agg.impostor_attempts += c.metrics.impostor_attempts;
                imp_acc += c.metrics.impostor_accepted;
                far_sum += *c.metrics.far;
                far_users++;
            }
            if (c.metrics.frr) {
                agg.genuine_attempts += c.metrics.genuine_attempts;
                gen_rej += c.metrics.genuine_rejected;
                frr_sum += *c.metrics.frr;
                frr_users++;
            }
        }
        if (far_users > 0) {
            agg.far_pooled = static_cast<double>(imp_acc) /
                             static_cast<double>(agg.impostor_attempts);
            agg.far_user_mean = far_sum / static_cast<double>(far_users);
        }
        if (frr_users > 0) {
            agg.frr_pooled = static_cast<double>(gen_rej) /
                             static_cast<double>(agg.genuine_attempts);
            agg.frr_user_mean = frr_sum / static_cast<double>(frr_users);
        }
        report.aggregates.push_back(std::move(agg));
    }
    return report;
}

namespace {

nlohmann::json metrics_to_json(const EvalMetrics& m) {
    nlohmann::json j;
    if (m.far) j["far"] = *m.far;
    if (m.frr) j["frr"] = *m.frr;
    if (m.far && m.frr) j["hter"] = hter(m);
    j["impostor_attempts"] = m.impostor_attempts;
    j["impostor_accepted"] = m.impostor_accepted;
    j["genuine_attempts"] = m.genuine_attempts;
    j["genuine_rejected"] = m.genuine_rejected;
    return j;
}

EvalMetrics metrics_from_json(const nlohmann::json& j) {
    EvalMetrics m;
    if (j.contains("far")) m.far = j["far"].get<double>();
    if (j.contains("frr")) m.frr = j["frr"].get<double>();
    m.impostor_attempts = j.at("impostor_attempts").get<std::size_t>();
    m.impostor_accepted = j.at("impostor_accepted").get<std::size_t>();
    m.genuine_attempts = j.at("genuine_attempts").get<std::size_t>();
    m.genuine_rejected = j.at("genuine_rejected").get<std::size_t>();
    return m;
}

}  // namespace

void save_report(const EvalReport& report, const std::filesystem::path& report_path,
                 const std::filesystem::path& decisions_path) {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw IoError(report_path.string() + ": cannot open for writing");
    nlohmann::json header;
    header["record"] = "header";
    header["config_hash"] = report.config_hash;
    header["seed"] = report.seed;
    header["timestamp"] = report.timestamp;
    out << header.dump() << "\n";
    for (const auto& c : report.cells) {
        nlohmann::json j;
        j["record"] = "cell";
        j["model"] = c.model_tag;
        j["user_id"] = c.user_id;
        j["scenario"] = c.scenario;
        j["metrics"] = metrics_to_json(c.metrics);
        out << j.dump() << "\n";
    }
    for (const auto& a : report.aggregates) {
        nlohmann::json j;
        j["record"] = "aggregate";
        j["scenario"] = a.scenario;
        if (a.far_pooled) j["far_pooled"] = *a.far_pooled;
        if (a.far_user_mean) j["far_user_mean"] = *a.far_user_mean;
        if (a.frr_pooled) j["frr_pooled"] = *a.frr_pooled;
        if (a.frr_user_mean) j["frr_user_mean"] = *a.frr_user_mean;
        j["impostor_attempts"] = a.impostor_attempts;
        j["genuine_attempts"] = a.genuine_attempts;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError(report_path.string() + ": write failed");

    if (!decisions_path.empty()) {
        std::ofstream dec(decisions_path, std::ios::trunc);
        if (!dec) throw IoError(decisions_path.string() + ": cannot open for writing");
        for (const auto& d : report.decisions) {
            nlohmann::json j;
            j["model"] = d.model_tag;
            j["user_id"] = d.user_id;
            j["scenario"] = d.scenario;
            j["index"] = d.sample_index;
            j["genuine_trial"] = d.genuine_trial;
            j["accepted"] = d.accepted;
            j["genuine_score"] = d.genuine_score;
            j["impostor_score"] = d.impostor_score;
            dec << j.dump() << "\n";
        }
    }
}

EvalReport load_report(const std::filesystem::path& report_path,
                       const std::filesystem::path& decisions_path) {
    std::ifstream in(report_path);
    if (!in) throw IoError(report_path.string() + ": cannot open file");
    EvalReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        const std::string record = j.at("record").get<std::string>();
        if (record == "header") {
            report.config_hash = j.at("config_hash").get<std::string>();
            report.seed = j.at("seed").get<std::uint64_t>();
            report.timestamp = j.value("timestamp", "");
        } else if (record == "cell") {
            EvalCell c;
            c.model_tag = j.at("model").get<std::string>();
            c.user_id = j.at("user_id").get<int>();
            c.scenario = j.at("scenario").get<std::string>();
            c.metrics = metrics_from_json(j.at("metrics"));
            report.cells.push_back(std::move(c));
        } else if (record == "aggregate") {
            ScenarioAggregate a;
            a.scenario = j.at("scenario").get<std::string>();
            if (j.contains("far_pooled")) a.far_pooled = j["far_pooled"].get<double>();
            if (j.contains("far_user_mean")) a.far_user_mean = j["far_user_mean"].get<double>();
            if (j.contains("frr_pooled")) a.frr_pooled = j["frr_pooled"].get<double>();
            if (j.contains("frr_user_mean")) a.frr_user_mean = j["frr_user_mean"].get<double>();
            a.impostor_attempts = j.at("impostor_attempts").get<std::size_t>();
            a.genuine_attempts = j.at("genuine_attempts").get<std::size_t>();
            report.aggregates.push_back(std::move(a));
        }
    }
    if (!decisions_path.empty() && std::filesystem::exists(decisions_path)) {
        std::ifstream dec(decisions_path);
        while (std::getline(dec, line)) {
            if (line.empty()) continue;
            const nlohmann::json j = nlohmann::json::parse(line);
            DecisionRecord d;
            d.model_tag = j.at("model").get<std::string>();
            d.user_id = j.at("user_id").get<int>();
            d.scenario = j.at("scenario").get<std::string>();
            d.sample_index = j.at("index").get<std::size_t>();
            d.genuine_trial = j.at("genuine_trial").get<bool>();
            d.accepted = j.at("accepted").get<bool>();
            d.genuine_score = j.at("genuine_score").get<double>();
            d.impostor_score = j.at("impostor_score").get<double>();
            report.decisions.push_back(std::move(d));
        }
    }
    return report;
}

}  // namespace sigforge
