#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sigforge/corpus.hpp"
#include "sigforge/net.hpp"
#include "sigforge/ssim.hpp"

namespace sigforge {

struct VaeHyper {
    int latent_dim = 32;
    int hidden = 256;
    double lr = 1e-3;
    double momentum = 0.9;
};

// Per-reference VAE: encoder maps the image to latent mean and log-variance,
// decoder maps a latent draw back to an image through a final sigmoid.
struct VaeModel {
    Network encoder;
    Network decoder;
    int latent_dim = 0;
    int image_w = 0;
    int image_h = 0;
    std::vector<LossValue> trace;  // per-epoch reconstruction + kl
};

VaeModel make_vae(int image_w, int image_h, const VaeHyper& hyper, std::uint64_t seed);

// ELBO with explicit reparameterization noise: reconstruction is summed
// pixelwise binary cross-entropy, KL is the closed form against N(0, I).
// Returns the loss and the gradients for (encoder, decoder).
struct VaeGrad {
    LossValue loss;
    std::vector<double> encoder_grad;
    std::vector<double> decoder_grad;
};
VaeGrad vae_loss_and_grad(const VaeModel& model, const std::vector<double>& image,
                          const std::vector<double>& noise);

// One gradient step per epoch on the single reference image; all
// reparameterization noise comes from the seeded stream.
VaeModel train_vae(const GrayImage& reference, int epochs, const VaeHyper& hyper,
                   std::uint64_t seed);

GrayImage sample_vae(const VaeModel& model, std::uint64_t seed);

struct CganHyper {
    int noise_dim = 64;
    int hidden = 256;
    double lr = 5e-4;
    double momentum = 0.9;
    bool non_saturating = false;  // generator minimizes log(1 - D(G(z|y))) by default
};

// Condition is the one-hot of the reference's label bucket.
inline constexpr int kConditionDim = 2;
std::vector<double> condition_one_hot(Label label);

struct CganModel {
    Network generator;      // [z, y] -> image
    Network discriminator;  // [image, y] -> realness score
    int noise_dim = 0;
    int image_w = 0;
    int image_h = 0;
    bool non_saturating = false;
    std::vector<std::pair<double, double>> trace;  // per-epoch (D value, G loss)
};

CganModel make_cgan(int image_w, int image_h, const CganHyper& hyper, std::uint64_t seed);

// Value function side for the discriminator: log D(x|y) + log(1 - D(G(z|y))),
// reported as-is (the quantity D ascends); the returned gradient is for the
// ascent step.
struct GanDiscriminatorGrad {
    LossValue value;  // components d_real, d_fake
    std::vector<double> ascent_grad;
};
GanDiscriminatorGrad gan_discriminator_value_and_grad(const CganModel& model,
                                                      const std::vector<double>& real_image,
                                                      const std::vector<double>& fake_image,
                                                      const std::vector<double>& condition);

// Generator side: log(1 - D(G(z|y))) or -log D(G(z|y)) when non-saturating.
struct GanGeneratorGrad {
    LossValue loss;
    std::vector<double> generator_grad;
};
GanGeneratorGrad gan_generator_loss_and_grad(const CganModel& model,
                                             const std::vector<double>& noise,
                                             const std::vector<double>& condition);

// Alternating D-ascent / G-descent steps, one of each per epoch.
CganModel train_cgan(const GrayImage& reference, Label condition, int epochs,
                     const CganHyper& hyper, std::uint64_t seed);

GrayImage sample_cgan(const CganModel& model, const std::vector<double>& condition,
                      std::uint64_t seed);

enum class GenMethod { kVae, kCgan, kVaeSsi };
std::string to_string(GenMethod m);
GenMethod gen_method_from_string(const std::string& s);

struct GenerationJob {
    GenMethod method = GenMethod::kVae;
    int samples_requested = 9;
    int epochs = 800;
    int sampling_interval = 5;
    double band_low = 0.04;
    double band_high = 0.08;
    int restart_budget = 20;
    std::uint64_t seed = 0;
    VaeHyper vae;
    CganHyper cgan;
    SsimParams ssim;

    void validate() const;
};

struct SyntheticSample {
    GrayImage image;  // 8-bit quantized, in the preprocessed representation
    int user_id = 0;
    Provenance provenance = Provenance::kVae;
    Split partition = Split::kUnassigned;  // inherited from the reference split
    double ssim_to_reference = 0.0;
    int reference_index = -1;
    std::uint64_t sample_seed = 0;
    int epochs_used = 0;
    int restarts = 0;
};

struct SyntheticSet {
    Provenance provenance = Provenance::kVae;
    std::vector<SyntheticSample> samples;

    double mean_ssim() const;
};

// Trains the chosen model for the full epoch budget on one preprocessed
// reference, then draws the requested number of outputs with distinct seeds.
// The reference must already carry a split, which the outputs inherit.
SyntheticSet generate_epoch_guided(const SignatureSample& reference, int reference_index,
                                   const GenerationJob& job);

// VAE only: samples one candidate every `sampling_interval` epochs and keeps
// it as soon as its SSIM to the reference falls inside the band, restarting
// from scratch with a fresh derived seed when the budget runs out. Throws
// with the attempts made and the SSIM values seen if the restart budget is
// exhausted for any sample.
SyntheticSet generate_ssim_controlled(const SignatureSample& reference, int reference_index,
                                      const GenerationJob& job);

void save_synthetic(const SyntheticSet& set, const std::filesystem::path& dir);
SyntheticSet load_synthetic(const std::filesystem::path& dir);

}  // namespace sigforge
