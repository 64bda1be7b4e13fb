#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace sigforge {

enum class LayerKind { kDense, kConv2d, kActivation };
enum class Activation { kNone, kRelu, kSigmoid, kTanh };

std::string to_string(LayerKind k);
std::string to_string(Activation a);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

// One layer of the fixed architecture set. Shapes are {n} for dense and
// activation layers, {channels, height, width} for conv2d (valid padding,
// square kernel, configurable stride).
struct LayerSpec {
    LayerKind kind = LayerKind::kDense;
    std::vector<int> in_shape;
    std::vector<int> out_shape;
    Activation activation = Activation::kNone;
    int kernel = 3;  // conv2d only
    int stride = 1;  // conv2d only

    std::size_t in_size() const;
    std::size_t out_size() const;
    std::size_t param_count() const;
    void validate() const;
};

LayerSpec dense_layer(int in, int out, Activation act = Activation::kNone);
LayerSpec conv2d_layer(int in_c, int in_h, int in_w, int out_c, int kernel,
                       Activation act = Activation::kNone, int stride = 1);
LayerSpec activation_layer(int n, Activation act);

// An ordered layer stack with one flat parameter vector and a matching
// momentum buffer. Treated as an immutable value between optimizer steps.
struct Network {
    std::vector<LayerSpec> layers;
    std::vector<double> params;
    std::vector<double> velocity;

    std::size_t param_count() const;
    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().in_size(); }
    std::size_t output_size() const { return layers.empty() ? 0 : layers.back().out_size(); }
    void validate() const;
};

// Builds a network with uniform +-sqrt(6/(fan_in+fan_out)) parameters from a
// seeded generator; the velocity buffer starts all-zero.
Network make_network(std::vector<LayerSpec> layers, std::uint64_t seed);

// Per-layer pre-activations and outputs from one forward pass.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
    const std::vector<double>& output() const { return post.back(); }
};

ForwardTrace forward_trace(const Network& net, const std::vector<double>& input);

// Every per-layer output, last entry is the network output.
std::vector<std::vector<double>> forward(const Network& net, const std::vector<double>& input);

// Gradient of a scalar loss w.r.t. all parameters, given dL/d(output).
// When grad_input is non-null it also receives dL/d(input), which is how
// composite models (decoder -> latent, discriminator -> generator) chain.
std::vector<double> backward(const Network& net, const std::vector<double>& input,
                             const ForwardTrace& trace, const std::vector<double>& grad_output,
                             std::vector<double>* grad_input = nullptr);

struct LossValue {
    double total = 0.0;
    std::vector<std::pair<std::string, double>> components;

    // Throws NumericError naming the first non-finite component, and
    // ValidationError if the components do not sum to the total.
    void validate() const;
};

enum class LossKind { kMse, kBce };

// Probabilities are clamped to [1e-7, 1-1e-7] before the log.
inline constexpr double kBceClamp = 1e-7;

LossValue loss_only(const std::vector<double>& output, const std::vector<double>& target,
                    LossKind kind);
// dL/d(output) for the same loss.
std::vector<double> loss_grad_wrt_output(const std::vector<double>& output,
                                         const std::vector<double>& target, LossKind kind);

std::pair<LossValue, std::vector<double>> loss_and_grad(const Network& net,
                                                        const std::vector<double>& input,
                                                        const std::vector<double>& target,
                                                        LossKind kind);

// velocity' = momentum * velocity - lr * gradient; params' = params + velocity'.
Network sgd_momentum_step(Network net, const std::vector<double>& gradient, double lr,
                          double momentum);

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with numeric from central differences of `loss_of_params`.
double grad_check(const std::function<double(const std::vector<double>&)>& loss_of_params,
                  const std::vector<double>& params, const std::vector<double>& analytic_grad,
                  double eps);

double grad_check(const Network& net, const std::vector<double>& input,
                  const std::vector<double>& target, LossKind kind, double eps);

// Model files: one JSON manifest line (version "sigforge-model-v1", layer
// specs, seed, free-form extra fields) followed by the parameter vector as
// little-endian 64-bit floats. Round trips are bit-exact.
inline constexpr const char* kModelFormatVersion = "sigforge-model-v1";

void save_model(const Network& net, std::uint64_t seed, const nlohmann::json& extra,
                const std::filesystem::path& path);

struct LoadedModel {
    Network net;
    std::uint64_t seed = 0;
    nlohmann::json extra;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace sigforge
