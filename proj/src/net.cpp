#include "sigforge/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sigforge/errors.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::kDense: return "dense";
        case LayerKind::kConv2d: return "conv2d";
        case LayerKind::kActivation: return "activation";
    }
    return "?";
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::kNone: return "none";
        case Activation::kRelu: return "relu";
        case Activation::kSigmoid: return "sigmoid";
        case Activation::kTanh: return "tanh";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::kDense;
    if (s == "conv2d") return LayerKind::kConv2d;
    if (s == "activation") return LayerKind::kActivation;
    throw ValidationError("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::kNone;
    if (s == "relu") return Activation::kRelu;
    if (s == "sigmoid") return Activation::kSigmoid;
    if (s == "tanh") return Activation::kTanh;
    throw ValidationError("unknown activation '" + s + "'");
}

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace

std::size_t LayerSpec::in_size() const { return shape_size(in_shape); }
std::size_t LayerSpec::out_size() const { return shape_size(out_shape); }

std::size_t LayerSpec::param_count() const {
    switch (kind) {
        case LayerKind::kDense: return in_size() * out_size() + out_size();
        case LayerKind::kConv2d: {
            const std::size_t k = static_cast<std::size_t>(kernel);
            return static_cast<std::size_t>(out_shape[0]) * static_cast<std::size_t>(in_shape[0]) *
                       k * k +
                   static_cast<std::size_t>(out_shape[0]);
        }
        case LayerKind::kActivation: return 0;
    }
    return 0;
}

void LayerSpec::validate() const {
    for (int d : in_shape)
        if (d < 1) throw ValidationError("LayerSpec: in_shape " + shape_str(in_shape));
    for (int d : out_shape)
        if (d < 1) throw ValidationError("LayerSpec: out_shape " + shape_str(out_shape));
    switch (kind) {
        case LayerKind::kDense:
            if (in_shape.empty() || out_shape.empty())
                throw ValidationError("LayerSpec: dense layer needs shapes");
            break;
        case LayerKind::kConv2d: {
            if (in_shape.size() != 3 || out_shape.size() != 3)
                throw ValidationError("LayerSpec: conv2d shapes must be {c,h,w}");
            if (kernel < 1) throw ValidationError("LayerSpec: conv kernel must be >= 1");
            if (stride < 1) throw ValidationError("LayerSpec: conv stride must be >= 1");
            if (out_shape[1] != (in_shape[1] - kernel) / stride + 1 ||
                out_shape[2] != (in_shape[2] - kernel) / stride + 1)
                throw ValidationError("LayerSpec: conv2d out " + shape_str(out_shape) +
                                      " inconsistent with in " + shape_str(in_shape) +
                                      " kernel " + std::to_string(kernel) + " stride " +
                                      std::to_string(stride));
            break;
        }
        case LayerKind::kActivation:
            if (in_size() != out_size())
                throw ValidationError("LayerSpec: activation layer must preserve shape");
            break;
    }
}

LayerSpec dense_layer(int in, int out, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.in_shape = {in};
    s.out_shape = {out};
    s.activation = act;
    s.validate();
    return s;
}

LayerSpec conv2d_layer(int in_c, int in_h, int in_w, int out_c, int kernel, Activation act,
                       int stride) {
    LayerSpec s;
    s.kind = LayerKind::kConv2d;
    s.in_shape = {in_c, in_h, in_w};
    if (stride < 1) throw ValidationError("conv2d_layer: stride must be >= 1");
    s.out_shape = {out_c, (in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1};
    s.kernel = kernel;
    s.stride = stride;
    s.activation = act;
    s.validate();
    return s;
}

LayerSpec activation_layer(int n, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::kActivation;
    s.in_shape = {n};
    s.out_shape = {n};
    s.activation = act;
    s.validate();
    return s;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

void Network::validate() const {
    if (layers.empty()) throw ValidationError("Network: no layers");
    for (const auto& l : layers) l.validate();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].out_size() != layers[i + 1].in_size())
            throw ValidationError("Network: layer " + std::to_string(i) + " out " +
                                  shape_str(layers[i].out_shape) + " does not feed layer " +
                                  std::to_string(i + 1) + " in " +
                                  shape_str(layers[i + 1].in_shape));
    }
    if (params.size() != param_count())
        throw ValidationError("Network: parameter vector length " + std::to_string(params.size()) +
                              " != expected " + std::to_string(param_count()));
    if (velocity.size() != params.size())
        throw ValidationError("Network: velocity length mismatch");
}

Network make_network(std::vector<LayerSpec> layers, std::uint64_t seed) {
    Network net;
    net.layers = std::move(layers);
    net.params.resize(net.param_count());
    net.velocity.assign(net.params.size(), 0.0);
    Rng rng(seed);
    std::size_t offset = 0;
    for (const auto& l : net.layers) {
        double fan_in = 1.0, fan_out = 1.0;
        if (l.kind == LayerKind::kDense) {
            fan_in = static_cast<double>(l.in_size());
            fan_out = static_cast<double>(l.out_size());
        } else if (l.kind == LayerKind::kConv2d) {
            fan_in = static_cast<double>(l.in_shape[0]) * l.kernel * l.kernel;
            fan_out = static_cast<double>(l.out_shape[0]) * l.kernel * l.kernel;
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < l.param_count(); ++i)
            net.params[offset + i] = rng.uniform(-limit, limit);
        offset += l.param_count();
    }
    net.validate();
    return net;
}

namespace {

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::kNone: return z;
        case Activation::kRelu: return z > 0.0 ? z : 0.0;
        case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::kTanh: return std::tanh(z);
    }
    return z;
}

// Derivative in terms of the pre-activation z.
double activation_derivative(Activation a, double z) {
    switch (a) {
        case Activation::kNone: return 1.0;
        case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::kSigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
        case Activation::kTanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

void layer_forward(const LayerSpec& l, const double* p, const std::vector<double>& x,
                   std::vector<double>& z) {
    z.assign(l.out_size(), 0.0);
    switch (l.kind) {
        case LayerKind::kDense: {
            const std::size_t in = l.in_size(), out = l.out_size();
            const double* b = p + in * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* row = p + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
                z[o] = acc;
            }
            break;
        }
        case LayerKind::kConv2d: {
            const int ic = l.in_shape[0], ih = l.in_shape[1], iw = l.in_shape[2];
            const int oc = l.out_shape[0], oh = l.out_shape[1], ow = l.out_shape[2];
            const int k = l.kernel, st = l.stride;
            const double* bias = p + static_cast<std::size_t>(oc) * ic * k * k;
            for (int co = 0; co < oc; ++co) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double acc = bias[co];
                        for (int ci = 0; ci < ic; ++ci) {
                            const double* w = p + ((static_cast<std::size_t>(co) * ic + ci) * k) * k;
                            const double* xin = x.data() + (static_cast<std::size_t>(ci) * ih) * iw;
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    acc += w[ky * k + kx] *
                                           xin[(oy * st + ky) * iw + (ox * st + kx)];
                        }
                        z[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            break;
        }
        case LayerKind::kActivation:
            z = x;
            break;
    }
}

}  // namespace

ForwardTrace forward_trace(const Network& net, const std::vector<double>& input) {
    net.validate();
    if (input.size() != net.input_size())
        throw ValidationError("forward: input size " + std::to_string(input.size()) +
                              " does not match first layer in_shape size " +
                              std::to_string(net.input_size()));
    ForwardTrace trace;
    trace.pre.resize(net.layers.size());
    trace.post.resize(net.layers.size());
    const std::vector<double>* x = &input;
    std::size_t offset = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerSpec& l = net.layers[li];
        layer_forward(l, net.params.data() + offset, *x, trace.pre[li]);
        trace.post[li].resize(l.out_size());
        for (std::size_t i = 0; i < trace.pre[li].size(); ++i)
            trace.post[li][i] = apply_activation(l.activation, trace.pre[li][i]);
        offset += l.param_count();
        x = &trace.post[li];
    }
    return trace;
}

std::vector<std::vector<double>> forward(const Network& net, const std::vector<double>& input) {
    return forward_trace(net, input).post;
}

std::vector<double> backward(const Network& net, const std::vector<double>& input,
                             const ForwardTrace& trace, const std::vector<double>& grad_output,
                             std::vector<double>* grad_input) {
    if (grad_output.size() != net.output_size())
        throw ValidationError("backward: grad size " + std::to_string(grad_output.size()) +
                              " != output size " + std::to_string(net.output_size()));
    std::vector<double> grad(net.params.size(), 0.0);
    std::vector<std::size_t> offsets(net.layers.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        offsets[i] = offset;
        offset += net.layers[i].param_count();
    }

    std::vector<double> delta = grad_output;  // dL/d(post-activation of layer li)
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const LayerSpec& l = net.layers[li];
        const std::vector<double>& pre = trace.pre[li];
        // Through the activation: dL/dz.
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= activation_derivative(l.activation, pre[i]);

        const std::vector<double>& x = (li == 0) ? input : trace.post[li - 1];
        const double* p = net.params.data() + offsets[li];
        double* g = grad.data() + offsets[li];
        std::vector<double> prev(l.in_size(), 0.0);

        switch (l.kind) {
            case LayerKind::kDense: {
                const std::size_t in = l.in_size(), out = l.out_size();
                double* gb = g + in * out;
                for (std::size_t o = 0; o < out; ++o) {
                    const double d = delta[o];
                    const double* row = p + o * in;
                    double* grow = g + o * in;
                    gb[o] += d;
                    for (std::size_t i = 0; i < in; ++i) {
                        grow[i] += d * x[i];
                        prev[i] += row[i] * d;
                    }
                }
                break;
            }
            case LayerKind::kConv2d: {
                const int ic = l.in_shape[0], ih = l.in_shape[1], iw = l.in_shape[2];
                const int oc = l.out_shape[0], oh = l.out_shape[1], ow = l.out_shape[2];
                const int k = l.kernel, st = l.stride;
                double* gbias = g + static_cast<std::size_t>(oc) * ic * k * k;
                for (int co = 0; co < oc; ++co) {
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            const double d =
                                delta[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
                            gbias[co] += d;
                            for (int ci = 0; ci < ic; ++ci) {
                                const double* w =
                                    p + ((static_cast<std::size_t>(co) * ic + ci) * k) * k;
                                double* gw = g + ((static_cast<std::size_t>(co) * ic + ci) * k) * k;
                                const std::size_t xoff = (static_cast<std::size_t>(ci) * ih) * iw;
                                for (int ky = 0; ky < k; ++ky) {
                                    for (int kx = 0; kx < k; ++kx) {
                                        const std::size_t xi =
                                            xoff + (oy * st + ky) * iw + (ox * st + kx);
                                        gw[ky * k + kx] += d * x[xi];
                                        prev[xi] += w[ky * k + kx] * d;
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::kActivation:
                prev = delta;
                break;
        }
        delta = std::move(prev);
    }
    if (grad_input) *grad_input = std::move(delta);
    return grad;
}

void LossValue::validate() const {
    double sum = 0.0;
    for (const auto& [name, value] : components) {
        if (!std::isfinite(value))
            throw NumericError("loss component '" + name + "' is non-finite");
        sum += value;
    }
    if (!std::isfinite(total)) throw NumericError("loss total is non-finite");
    const double scale = std::max({std::fabs(total), std::fabs(sum), 1.0});
    if (std::fabs(total - sum) > 1e-9 * scale)
        throw ValidationError("loss components sum " + std::to_string(sum) + " != total " +
                              std::to_string(total));
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); }

}  // namespace

LossValue loss_only(const std::vector<double>& output, const std::vector<double>& target,
                    LossKind kind) {
    if (output.size() != target.size())
        throw ValidationError("loss: output size " + std::to_string(output.size()) +
                              " != target size " + std::to_string(target.size()));
    const double n = static_cast<double>(output.size());
    double acc = 0.0;
    std::string name;
    switch (kind) {
        case LossKind::kMse:
            name = "mse";
            for (std::size_t i = 0; i < output.size(); ++i) {
                const double e = output[i] - target[i];
                acc += e * e;
            }
            acc /= n;
            break;
        case LossKind::kBce:
            name = "bce";
            for (std::size_t i = 0; i < output.size(); ++i) {
                const double p = clamp_prob(output[i]);
                acc -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
            }
            acc /= n;
            break;
    }
    LossValue loss;
    loss.total = acc;
    loss.components = {{name, acc}};
    loss.validate();
    return loss;
}

std::vector<double> loss_grad_wrt_output(const std::vector<double>& output,
                                         const std::vector<double>& target, LossKind kind) {
    const double n = static_cast<double>(output.size());
    std::vector<double> g(output.size(), 0.0);
    switch (kind) {
        case LossKind::kMse:
            for (std::size_t i = 0; i < output.size(); ++i)
                g[i] = 2.0 * (output[i] - target[i]) / n;
            break;
        case LossKind::kBce:
            for (std::size_t i = 0; i < output.size(); ++i) {
                if (output[i] <= kBceClamp || output[i] >= 1.0 - kBceClamp) continue;  // flat
                const double p = output[i];
                g[i] = (p - target[i]) / (p * (1.0 - p)) / n;
            }
            break;
    }
    return g;
}

std::pair<LossValue, std::vector<double>> loss_and_grad(const Network& net,
                                                        const std::vector<double>& input,
                                                        const std::vector<double>& target,
                                                        LossKind kind) {
    const ForwardTrace trace = forward_trace(net, input);
    const LossValue loss = loss_only(trace.output(), target, kind);
    const std::vector<double> gout = loss_grad_wrt_output(trace.output(), target, kind);
    std::vector<double> grad = backward(net, input, trace, gout);
    return {loss, std::move(grad)};
}

Network sgd_momentum_step(Network net, const std::vector<double>& gradient, double lr,
                          double momentum) {
    if (gradient.size() != net.params.size())
        throw ValidationError("sgd_momentum_step: gradient length " +
                              std::to_string(gradient.size()) + " != parameter length " +
                              std::to_string(net.params.size()));
    if (lr < 0.0) throw ValidationError("sgd_momentum_step: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("sgd_momentum_step: momentum must be in [0,1)");
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        net.velocity[i] = momentum * net.velocity[i] - lr * gradient[i];
        net.params[i] += net.velocity[i];
    }
    return net;
}

double grad_check(const std::function<double(const std::vector<double>&)>& loss_of_params,
                  const std::vector<double>& params, const std::vector<double>& analytic_grad,
                  double eps) {
    if (eps <= 0.0) throw ValidationError("grad_check: eps must be > 0");
    if (params.size() != analytic_grad.size())
        throw ValidationError("grad_check: gradient length mismatch");
    std::vector<double> probe = params;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + eps;
        const double up = loss_of_params(probe);
        probe[i] = params[i] - eps;
        const double down = loss_of_params(probe);
        probe[i] = params[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite loss at parameter " + std::to_string(i));
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = analytic_grad[i];
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
    return worst;
}

double grad_check(const Network& net, const std::vector<double>& input,
                  const std::vector<double>& target, LossKind kind, double eps) {
    const auto [loss, grad] = loss_and_grad(net, input, target, kind);
    (void)loss;
    Network probe = net;
    return grad_check(
        [&](const std::vector<double>& p) {
            probe.params = p;
            const ForwardTrace t = forward_trace(probe, input);
            return loss_only(t.output(), target, kind).total;
        },
        net.params, grad, eps);
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["kind"] = to_string(l.kind);
    j["in_shape"] = l.in_shape;
    j["out_shape"] = l.out_shape;
    j["activation"] = to_string(l.activation);
    if (l.kind == LayerKind::kConv2d) {
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.in_shape = j.at("in_shape").get<std::vector<int>>();
    l.out_shape = j.at("out_shape").get<std::vector<int>>();
    l.activation = activation_from_string(j.at("activation").get<std::string>());
    if (l.kind == LayerKind::kConv2d) {
        l.kernel = j.at("kernel").get<int>();
        l.stride = j.value("stride", 1);
    }
    l.validate();
    return l;
}

}  // namespace

void save_model(const Network& net, std::uint64_t seed, const nlohmann::json& extra,
                const std::filesystem::path& path) {
    net.validate();
    nlohmann::json manifest;
    manifest["version"] = kModelFormatVersion;
    manifest["seed"] = seed;
    manifest["param_count"] = net.params.size();
    manifest["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers) manifest["layers"].push_back(layer_to_json(l));
    if (!extra.is_null()) manifest["extra"] = extra;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << manifest.dump() << "\n";
    for (double v : net.params) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) throw IoError(path.string() + ": write failed");
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": truncated file: no manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": unsupported format: bad manifest: " + e.what());
    }
    if (manifest.value("version", "") != kModelFormatVersion)
        throw IoError(path.string() + ": unsupported format: version '" +
                      manifest.value("version", "") + "'");
    LoadedModel model;
    model.seed = manifest.at("seed").get<std::uint64_t>();
    if (manifest.contains("extra")) model.extra = manifest["extra"];
    for (const auto& jl : manifest.at("layers")) model.net.layers.push_back(layer_from_json(jl));

    const std::size_t count = manifest.at("param_count").get<std::size_t>();
    model.net.params.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        if (in.gcount() != 8)
            throw IoError(path.string() + ": truncated file: parameter " + std::to_string(i));
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        std::memcpy(&model.net.params[i], &bits, sizeof(double));
    }
    model.net.velocity.assign(count, 0.0);
    model.net.validate();
    return model;
}

}  // namespace sigforge
