#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sigforge/corpus.hpp"
#include "sigforge/net.hpp"

namespace sigforge {

enum class ExtractorKind { kRaw, kTrained };
std::string to_string(ExtractorKind k);
ExtractorKind extractor_kind_from_string(const std::string& s);

// Shared frozen feature extractor. The trained variant learns to classify
// user identity on the training split and then drops its classification
// layer; the raw variant passes flattened pixels through untouched.
class FeatureExtractor {
public:
    static FeatureExtractor raw(int input_w, int input_h);
    static FeatureExtractor trained(Network feature_net, int input_w, int input_h,
                                    std::uint64_t seed);

    ExtractorKind kind() const { return kind_; }
    int input_w() const { return input_w_; }
    int input_h() const { return input_h_; }
    int feature_dim() const { return feature_dim_; }
    std::uint64_t seed() const { return seed_; }
    bool frozen() const { return true; }  // frozen from construction on
    const Network& net() const { return net_; }

    // Rejects images that are not preprocessed to the configured size.
    std::vector<double> features(const GrayImage& image) const;

private:
    FeatureExtractor() = default;
    ExtractorKind kind_ = ExtractorKind::kRaw;
    Network net_;  // empty for raw
    int input_w_ = 0;
    int input_h_ = 0;
    int feature_dim_ = 0;
    std::uint64_t seed_ = 0;
};

struct ExtractorHyper {
    int hidden = 128;
    double lr = 1e-3;
    double momentum = 0.9;
    int epochs = 30;
};

// Trains user-identity classification on the training split (preprocessed
// images), then freezes the hidden layer as the feature map.
FeatureExtractor train_extractor(const std::vector<SignatureSample>& train_split,
                                 const ExtractorHyper& hyper, std::uint64_t seed);

struct Decision {
    bool accepted = false;
    double genuine_score = 0.0;
    double impostor_score = 0.0;
};

// The only surface attack code may touch: accept/reject plus the scores the
// verifier exposes, never parameters.
class BlackBoxVerifier {
public:
    virtual ~BlackBoxVerifier() = default;
    virtual int user_id() const = 0;
    virtual std::string tag() const = 0;
    virtual Decision verify(const GrayImage& image) const = 0;
};

struct VerifierHyper {
    int hidden = 256;
    double lr = 1e-4;
    double momentum = 0.9;
    int epochs = 200;
};

// Writer-dependent head on top of the shared extractor: feature -> 256 ReLU
// -> 2 sigmoid nodes (genuine score, impostor score); accepted iff the
// genuine score strictly exceeds the impostor score.
class VerifierModel : public BlackBoxVerifier {
public:
    VerifierModel(int user, std::shared_ptr<const FeatureExtractor> extractor, Network head,
                  std::uint64_t seed, std::string tag, std::vector<double> loss_trace);

    int user_id() const override { return user_id_; }
    std::string tag() const override { return tag_; }
    Decision verify(const GrayImage& image) const override;

    const Network& head() const { return head_; }
    const FeatureExtractor& extractor() const { return *extractor_; }
    std::shared_ptr<const FeatureExtractor> extractor_ptr() const { return extractor_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<double>& loss_trace() const { return loss_trace_; }

private:
    int user_id_ = 0;
    std::shared_ptr<const FeatureExtractor> extractor_;
    Network head_;
    std::uint64_t seed_ = 0;
    std::string tag_;
    std::vector<double> loss_trace_;  // mean per-epoch training loss
};

// Per-node BCE against (1,0) for genuine and (0,1) for forged; per-sample
// SGD with a seeded shuffle each epoch. Requires both labels present.
VerifierModel train_verifier(const std::vector<SignatureSample>& user_train_samples,
                             std::shared_ptr<const FeatureExtractor> extractor,
                             const VerifierHyper& hyper, std::uint64_t seed,
                             const std::string& tag = "baseline");

void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path);
std::shared_ptr<const FeatureExtractor> load_extractor(const std::filesystem::path& path);

void save_verifier(const VerifierModel& model, const std::filesystem::path& path);
VerifierModel load_verifier(const std::filesystem::path& path,
                            std::shared_ptr<const FeatureExtractor> extractor);

}  // namespace sigforge
