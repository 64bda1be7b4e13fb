#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sigforge/image.hpp"

namespace sigforge {

enum class Label { kGenuine, kForged };
enum class Provenance { kHuman, kRandom, kVae, kCgan, kVaeSsi, kProcedural };
enum class Split { kUnassigned, kTrain, kTest };

std::string to_string(Label l);
std::string to_string(Provenance p);
std::string to_string(Split s);
Label label_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct SignatureSample {
    GrayImage image;
    int user_id = 0;
    Label label = Label::kGenuine;
    Provenance provenance = Provenance::kProcedural;
    Split split = Split::kUnassigned;

    void validate() const;
};

// Desk-scale substitute for the public signature datasets: per user, a base
// scribble of connected cubic strokes; genuine samples jitter the control
// points a little, forgeries perturb them a lot.
struct CorpusConfig {
    int users = 8;
    int genuine_per_user = 12;
    int forged_per_user = 12;
    int image_size = 64;
    int stroke_count_min = 3;
    int stroke_count_max = 5;
    double genuine_jitter = 0.015;        // control-point noise, fraction of image size
    double forger_perturbation = 0.08;    // must exceed genuine_jitter
    std::uint64_t master_seed = 7;

    void validate() const;
};

// Deterministic per master seed; per-user streams are derived so parallel
// and serial generation agree.
std::vector<SignatureSample> generate_corpus(const CorpusConfig& cfg, int jobs = 1);

// Per user and per label, floor(n * train_fraction) samples go to train and
// the rest to test, after a seeded shuffle. Rejects groups of fewer than two
// samples and samples that already carry a split.
std::vector<SignatureSample> split_dataset(std::vector<SignatureSample> samples,
                                           double train_fraction, std::uint64_t seed);

// Reads <root>/<dataset>/<user_id>/{genuine,forgery}/*.pgm as human samples.
std::vector<SignatureSample> ingest_dataset(const std::filesystem::path& root);

// Corpus persistence: PGM files plus a samples.jsonl manifest.
void save_samples(const std::vector<SignatureSample>& samples,
                  const std::filesystem::path& dir);
std::vector<SignatureSample> load_samples(const std::filesystem::path& dir);

}  // namespace sigforge
