#include "sigforge/verifier.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "sigforge/errors.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

std::string to_string(ExtractorKind k) {
    return k == ExtractorKind::kRaw ? "raw" : "trained";
}

ExtractorKind extractor_kind_from_string(const std::string& s) {
    if (s == "raw") return ExtractorKind::kRaw;
    if (s == "trained") return ExtractorKind::kTrained;
    throw ValidationError("unknown extractor kind '" + s + "'");
}

FeatureExtractor FeatureExtractor::raw(int input_w, int input_h) {
    FeatureExtractor e;
    e.kind_ = ExtractorKind::kRaw;
    e.input_w_ = input_w;
    e.input_h_ = input_h;
    e.feature_dim_ = input_w * input_h;
    return e;
}

FeatureExtractor FeatureExtractor::trained(Network feature_net, int input_w, int input_h,
                                           std::uint64_t seed) {
    feature_net.validate();
    FeatureExtractor e;
    e.kind_ = ExtractorKind::kTrained;
    e.net_ = std::move(feature_net);
    e.input_w_ = input_w;
    e.input_h_ = input_h;
    e.feature_dim_ = static_cast<int>(e.net_.output_size());
    e.seed_ = seed;
    return e;
}

std::vector<double> FeatureExtractor::features(const GrayImage& image) const {
    if (image.width != input_w_ || image.height != input_h_)
        throw ValidationError("FeatureExtractor: image " + std::to_string(image.width) + "x" +
                              std::to_string(image.height) + " does not match configured size " +
                              std::to_string(input_w_) + "x" + std::to_string(input_h_) +
                              "; caller must preprocess");
    if (kind_ == ExtractorKind::kRaw) return image.pixels;
    return forward(net_, image.pixels).back();
}

FeatureExtractor train_extractor(const std::vector<SignatureSample>& train_split,
                                 const ExtractorHyper& hyper, std::uint64_t seed) {
    if (train_split.empty()) throw ValidationError("train_extractor: empty training split");
    std::set<int> users;
    for (const auto& s : train_split) users.insert(s.user_id);
    if (users.size() < 2)
        throw ValidationError("train_extractor: need >= 2 users, got " +
                              std::to_string(users.size()));
    std::map<int, int> user_index;
    for (int u : users) user_index.emplace(u, static_cast<int>(user_index.size()));

    const int w = train_split.front().image.width;
    const int h = train_split.front().image.height;
    const int classes = static_cast<int>(users.size());

    // Identity classification stack; the hidden layer becomes the feature map.
    Network net = make_network(
        {dense_layer(w * h, hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, classes, Activation::kSigmoid)},
        derive_seed(seed, "extractor-init"));

    std::vector<std::size_t> order(train_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, "extractor-shuffle"));
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        for (std::size_t i : order) {
            const SignatureSample& s = train_split[i];
            if (s.image.width != w || s.image.height != h)
                throw ValidationError("train_extractor: mixed image sizes in training split");
            std::vector<double> target(static_cast<std::size_t>(classes), 0.0);
            target[static_cast<std::size_t>(user_index.at(s.user_id))] = 1.0;
            const auto [loss, grad] = loss_and_grad(net, s.image.pixels, target, LossKind::kBce);
            loss.validate();
            net = sgd_momentum_step(std::move(net), grad, hyper.lr, hyper.momentum);
        }
    }

    // Drop the classification layer.
    Network feature_net;
    feature_net.layers = {net.layers[0]};
    const std::size_t keep = net.layers[0].param_count();
    feature_net.params.assign(net.params.begin(), net.params.begin() + static_cast<long>(keep));
    feature_net.velocity.assign(keep, 0.0);
    return FeatureExtractor::trained(std::move(feature_net), w, h, seed);
}

VerifierModel::VerifierModel(int user, std::shared_ptr<const FeatureExtractor> extractor,
                             Network head, std::uint64_t seed, std::string tag,
                             std::vector<double> loss_trace)
    : user_id_(user), extractor_(std::move(extractor)), head_(std::move(head)), seed_(seed),
      tag_(std::move(tag)), loss_trace_(std::move(loss_trace)) {
    if (!extractor_) throw ValidationError("VerifierModel: extractor is required");
    head_.validate();
    if (head_.output_size() != 2)
        throw ValidationError("VerifierModel: head must have two output nodes");
}

Decision VerifierModel::verify(const GrayImage& image) const {
    const std::vector<double> feats = extractor_->features(image);
    const auto outs = forward(head_, feats);
    Decision d;
    d.genuine_score = outs.back()[0];
    d.impostor_score = outs.back()[1];
    d.accepted = d.genuine_score > d.impostor_score;  // ties reject
    return d;
}

VerifierModel train_verifier(const std::vector<SignatureSample>& user_train_samples,
                             std::shared_ptr<const FeatureExtractor> extractor,
                             const VerifierHyper& hyper, std::uint64_t seed,
                             const std::string& tag) {
    if (!extractor) throw ValidationError("train_verifier: extractor is required");
    if (user_train_samples.empty()) throw ValidationError("train_verifier: empty training set");
    bool has_genuine = false, has_forged = false;
    const int user = user_train_samples.front().user_id;
    for (const auto& s : user_train_samples) {
        if (s.user_id != user)
            throw ValidationError("train_verifier: writer-dependent head got samples from users " +
                                  std::to_string(user) + " and " + std::to_string(s.user_id));
        (s.label == Label::kGenuine ? has_genuine : has_forged) = true;
    }
    if (!has_genuine || !has_forged)
        throw ValidationError("train_verifier: training set for user " + std::to_string(user) +
                              " must contain both genuine and forged samples");

    // Features are fixed by the frozen extractor; compute them once.
    std::vector<std::vector<double>> feats;
    std::vector<std::vector<double>> targets;
    feats.reserve(user_train_samples.size());
    for (const auto& s : user_train_samples) {
        feats.push_back(extractor->features(s.image));
        targets.push_back(s.label == Label::kGenuine ? std::vector<double>{1.0, 0.0}
                                                     : std::vector<double>{0.0, 1.0});
    }

    Network head = make_network(
        {dense_layer(extractor->feature_dim(), hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, 2, Activation::kSigmoid)},
        derive_seed(seed, "head-init"));

    std::vector<std::size_t> order(feats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, "head-shuffle"));
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(hyper.epochs));
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        double epoch_loss = 0.0;
        for (std::size_t i : order) {
            const auto [loss, grad] = loss_and_grad(head, feats[i], targets[i], LossKind::kBce);
            loss.validate();
            epoch_loss += loss.total;
            head = sgd_momentum_step(std::move(head), grad, hyper.lr, hyper.momentum);
        }
        trace.push_back(epoch_loss / static_cast<double>(feats.size()));
    }
    return VerifierModel(user, std::move(extractor), std::move(head), seed, tag, std::move(trace));
}

void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path) {
    nlohmann::json extra;
    extra["role"] = "feature-extractor";
    extra["kind"] = to_string(extractor.kind());
    extra["input_w"] = extractor.input_w();
    extra["input_h"] = extractor.input_h();
    if (extractor.kind() == ExtractorKind::kRaw) {
        // No parameters; persist the manifest with an empty single-layer net.
        Network placeholder;
        placeholder.layers = {activation_layer(extractor.input_w() * extractor.input_h(),
                                               Activation::kNone)};
        save_model(placeholder, extractor.seed(), extra, path);
    } else {
        save_model(extractor.net(), extractor.seed(), extra, path);
    }
}

std::shared_ptr<const FeatureExtractor> load_extractor(const std::filesystem::path& path) {
    LoadedModel m = load_model(path);
    const auto kind = extractor_kind_from_string(m.extra.at("kind").get<std::string>());
    const int w = m.extra.at("input_w").get<int>();
    const int h = m.extra.at("input_h").get<int>();
    if (kind == ExtractorKind::kRaw)
        return std::make_shared<FeatureExtractor>(FeatureExtractor::raw(w, h));
    return std::make_shared<FeatureExtractor>(
        FeatureExtractor::trained(std::move(m.net), w, h, m.seed));
}

void save_verifier(const VerifierModel& model, const std::filesystem::path& path) {
    nlohmann::json extra;
    extra["role"] = "verifier-head";
    extra["user_id"] = model.user_id();
    extra["tag"] = model.tag();
    extra["loss_trace"] = model.loss_trace();
    save_model(model.head(), model.seed(), extra, path);
}

VerifierModel load_verifier(const std::filesystem::path& path,
                            std::shared_ptr<const FeatureExtractor> extractor) {
    LoadedModel m = load_model(path);
    return VerifierModel(m.extra.at("user_id").get<int>(), std::move(extractor),
                         std::move(m.net), m.seed, m.extra.at("tag").get<std::string>(),
                         m.extra.at("loss_trace").get<std::vector<double>>());
}

}  // namespace sigforge
