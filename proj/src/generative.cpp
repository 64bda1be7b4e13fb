#include "sigforge/generative.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sigforge/errors.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

namespace {

double clamp_prob(double p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); }

// Summed pixelwise binary cross-entropy (the Bernoulli -log p(x|z)).
double recon_bce(const std::vector<double>& decoded, const std::vector<double>& image) {
    double acc = 0.0;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        const double p = clamp_prob(decoded[i]);
        acc -= image[i] * std::log(p) + (1.0 - image[i]) * std::log(1.0 - p);
    }
    return acc;
}

std::vector<double> recon_bce_grad(const std::vector<double>& decoded,
                                   const std::vector<double>& image) {
    std::vector<double> g(decoded.size(), 0.0);
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (decoded[i] <= kBceClamp || decoded[i] >= 1.0 - kBceClamp) continue;
        g[i] = (decoded[i] - image[i]) / (decoded[i] * (1.0 - decoded[i]));
    }
    return g;
}

}  // namespace

VaeModel make_vae(int image_w, int image_h, const VaeHyper& hyper, std::uint64_t seed) {
    if (hyper.latent_dim < 1 || hyper.hidden < 1)
        throw ValidationError("make_vae: latent_dim and hidden must be >= 1");
    const int pixels = image_w * image_h;
    VaeModel model;
    model.latent_dim = hyper.latent_dim;
    model.image_w = image_w;
    model.image_h = image_h;
    model.encoder = make_network(
        {dense_layer(pixels, hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, 2 * hyper.latent_dim, Activation::kNone)},
        derive_seed(seed, "vae-encoder"));
    model.decoder = make_network(
        {dense_layer(hyper.latent_dim, hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, pixels, Activation::kSigmoid)},
        derive_seed(seed, "vae-decoder"));
    return model;
}

VaeGrad vae_loss_and_grad(const VaeModel& model, const std::vector<double>& image,
                          const std::vector<double>& noise) {
    const int latent = model.latent_dim;
    if (noise.size() != static_cast<std::size_t>(latent))
        throw ValidationError("vae_loss_and_grad: noise length " + std::to_string(noise.size()) +
                              " != latent dim " + std::to_string(latent));

    const ForwardTrace enc = forward_trace(model.encoder, image);
    const std::vector<double>& stats = enc.output();  // [mu..., logvar...]

    std::vector<double> z(latent);
    double kl = 0.0;
    for (int i = 0; i < latent; ++i) {
        const double mu = stats[static_cast<std::size_t>(i)];
        const double logvar = stats[static_cast<std::size_t>(latent + i)];
        z[static_cast<std::size_t>(i)] = mu + std::exp(0.5 * logvar) * noise[static_cast<std::size_t>(i)];
        kl += 0.5 * (mu * mu + std::exp(logvar) - logvar - 1.0);
    }

    const ForwardTrace dec = forward_trace(model.decoder, z);
    const double recon = recon_bce(dec.output(), image);

    VaeGrad out;
    out.loss.total = recon + kl;
    out.loss.components = {{"reconstruction", recon}, {"kl", kl}};
    out.loss.validate();

    std::vector<double> dz;
    out.decoder_grad = backward(model.decoder, z, dec, recon_bce_grad(dec.output(), image), &dz);

    // Chain through the reparameterization and add the KL terms.
    std::vector<double> dstats(static_cast<std::size_t>(2 * latent), 0.0);
    for (int i = 0; i < latent; ++i) {
        const double mu = stats[static_cast<std::size_t>(i)];
        const double logvar = stats[static_cast<std::size_t>(latent + i)];
        dstats[static_cast<std::size_t>(i)] = dz[static_cast<std::size_t>(i)] + mu;
        dstats[static_cast<std::size_t>(latent + i)] =
            dz[static_cast<std::size_t>(i)] * 0.5 * std::exp(0.5 * logvar) *
                noise[static_cast<std::size_t>(i)] +
            0.5 * (std::exp(logvar) - 1.0);
    }
    out.encoder_grad = backward(model.encoder, image, enc, dstats);
    return out;
}

VaeModel train_vae(const GrayImage& reference, int epochs, const VaeHyper& hyper,
                   std::uint64_t seed) {
    if (epochs < 1) throw ValidationError("train_vae: epochs must be >= 1");
    reference.validate("train_vae reference");
    VaeModel model = make_vae(reference.width, reference.height, hyper, seed);
    Rng noise_stream(derive_seed(seed, "vae-noise"));
    model.trace.reserve(static_cast<std::size_t>(epochs));
    std::vector<double> noise(static_cast<std::size_t>(model.latent_dim));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (double& n : noise) n = noise_stream.normal();
        VaeGrad grad;
        try {
            grad = vae_loss_and_grad(model, reference.pixels, noise);
        } catch (const NumericError& e) {
            throw NumericError("train_vae: epoch " + std::to_string(epoch) + ": " + e.what());
        }
        model.encoder = sgd_momentum_step(std::move(model.encoder), grad.encoder_grad, hyper.lr,
                                          hyper.momentum);
        model.decoder = sgd_momentum_step(std::move(model.decoder), grad.decoder_grad, hyper.lr,
                                          hyper.momentum);
        model.trace.push_back(std::move(grad.loss));
    }
    return model;
}

GrayImage sample_vae(const VaeModel& model, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "vae-sample"));
    std::vector<double> z(static_cast<std::size_t>(model.latent_dim));
    for (double& v : z) v = rng.normal();
    const auto outs = forward(model.decoder, z);
    GrayImage img(model.image_w, model.image_h);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(outs.back()[i], 0.0, 1.0);
    return img;
}

std::vector<double> condition_one_hot(Label label) {
    std::vector<double> y(kConditionDim, 0.0);
    y[label == Label::kGenuine ? 0 : 1] = 1.0;
    return y;
}

CganModel make_cgan(int image_w, int image_h, const CganHyper& hyper, std::uint64_t seed) {
    if (hyper.noise_dim < 1 || hyper.hidden < 1)
        throw ValidationError("make_cgan: noise_dim and hidden must be >= 1");
    const int pixels = image_w * image_h;
    CganModel model;
    model.noise_dim = hyper.noise_dim;
    model.image_w = image_w;
    model.image_h = image_h;
    model.non_saturating = hyper.non_saturating;
    model.generator = make_network(
        {dense_layer(hyper.noise_dim + kConditionDim, hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, pixels, Activation::kSigmoid)},
        derive_seed(seed, "cgan-generator"));
    model.discriminator = make_network(
        {dense_layer(pixels + kConditionDim, hyper.hidden, Activation::kRelu),
         dense_layer(hyper.hidden, 1, Activation::kSigmoid)},
        derive_seed(seed, "cgan-discriminator"));
    return model;
}

namespace {

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

void check_condition(const std::vector<double>& condition) {
    if (condition.size() != kConditionDim)
        throw ValidationError("cgan: condition length " + std::to_string(condition.size()) +
                              " != " + std::to_string(kConditionDim));
    double sum = 0.0;
    for (double v : condition) {
        if (v != 0.0 && v != 1.0)
            throw ValidationError("cgan: condition must be one-hot");
        sum += v;
    }
    if (sum != 1.0) throw ValidationError("cgan: condition must have exactly one hot entry");
}

}  // namespace

GanDiscriminatorGrad gan_discriminator_value_and_grad(const CganModel& model,
                                                      const std::vector<double>& real_image,
                                                      const std::vector<double>& fake_image,
                                                      const std::vector<double>& condition) {
    check_condition(condition);
    const std::vector<double> real_in = concat(real_image, condition);
    const std::vector<double> fake_in = concat(fake_image, condition);
    const ForwardTrace real_t = forward_trace(model.discriminator, real_in);
    const ForwardTrace fake_t = forward_trace(model.discriminator, fake_in);
    const double p_real = clamp_prob(real_t.output()[0]);
    const double p_fake = clamp_prob(fake_t.output()[0]);

    GanDiscriminatorGrad out;
    const double d_real = std::log(p_real);
    const double d_fake = std::log(1.0 - p_fake);
    out.value.total = d_real + d_fake;
    out.value.components = {{"d_real", d_real}, {"d_fake", d_fake}};
    out.value.validate();

    // Ascent on V: the returned gradient is d(-V)/dtheta, so feeding it to
    // the minimizing SGD step ascends the value function.
    std::vector<double> g_real = {real_t.output()[0] <= kBceClamp ||
                                          real_t.output()[0] >= 1.0 - kBceClamp
                                      ? 0.0
                                      : -1.0 / p_real};
    std::vector<double> g_fake = {fake_t.output()[0] <= kBceClamp ||
                                          fake_t.output()[0] >= 1.0 - kBceClamp
                                      ? 0.0
                                      : 1.0 / (1.0 - p_fake)};
    out.ascent_grad = backward(model.discriminator, real_in, real_t, g_real);
    const std::vector<double> fake_grad = backward(model.discriminator, fake_in, fake_t, g_fake);
    for (std::size_t i = 0; i < out.ascent_grad.size(); ++i) out.ascent_grad[i] += fake_grad[i];
    return out;
}

GanGeneratorGrad gan_generator_loss_and_grad(const CganModel& model,
                                             const std::vector<double>& noise,
                                             const std::vector<double>& condition) {
    check_condition(condition);
    if (noise.size() != static_cast<std::size_t>(model.noise_dim))
        throw ValidationError("cgan: noise length " + std::to_string(noise.size()) + " != " +
                              std::to_string(model.noise_dim));
    const std::vector<double> g_in = concat(noise, condition);
    const ForwardTrace gen_t = forward_trace(model.generator, g_in);
    const std::vector<double> d_in = concat(gen_t.output(), condition);
    const ForwardTrace disc_t = forward_trace(model.discriminator, d_in);
    const double raw = disc_t.output()[0];
    const double p = clamp_prob(raw);

    GanGeneratorGrad out;
    double dl_dp;  // d(loss)/d(raw discriminator output)
    if (model.non_saturating) {
        out.loss.total = -std::log(p);
        out.loss.components = {{"g_nonsat", out.loss.total}};
        dl_dp = -1.0 / p;
    } else {
        out.loss.total = std::log(1.0 - p);
        out.loss.components = {{"g_sat", out.loss.total}};
        dl_dp = -1.0 / (1.0 - p);
    }
    out.loss.validate();
    if (raw <= kBceClamp || raw >= 1.0 - kBceClamp) dl_dp = 0.0;

    std::vector<double> d_input_grad;
    backward(model.discriminator, d_in, disc_t, {dl_dp}, &d_input_grad);
    // Only the image part of the discriminator input flows back into G.
    d_input_grad.resize(gen_t.output().size());
    out.generator_grad = backward(model.generator, g_in, gen_t, d_input_grad);
    return out;
}

CganModel train_cgan(const GrayImage& reference, Label condition, int epochs,
                     const CganHyper& hyper, std::uint64_t seed) {
    if (epochs < 1) throw ValidationError("train_cgan: epochs must be >= 1");
    reference.validate("train_cgan reference");
    CganModel model = make_cgan(reference.width, reference.height, hyper, seed);
    const std::vector<double> y = condition_one_hot(condition);
    Rng noise_stream(derive_seed(seed, "cgan-noise"));
    model.trace.reserve(static_cast<std::size_t>(epochs));
    std::vector<double> z(static_cast<std::size_t>(model.noise_dim));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Discriminator ascent step on the current generator's output.
        for (double& v : z) v = noise_stream.normal();
        const auto fake = forward(model.generator, concat(z, y)).back();
        GanDiscriminatorGrad d;
        try {
            d = gan_discriminator_value_and_grad(model, reference.pixels, fake, y);
        } catch (const NumericError& e) {
            throw NumericError("train_cgan: epoch " + std::to_string(epoch) + " side D: " +
                               e.what());
        }
        model.discriminator = sgd_momentum_step(std::move(model.discriminator), d.ascent_grad,
                                                hyper.lr, hyper.momentum);

        // Generator descent step on a fresh draw.
        for (double& v : z) v = noise_stream.normal();
        GanGeneratorGrad g;
        try {
            g = gan_generator_loss_and_grad(model, z, y);
        } catch (const NumericError& e) {
            throw NumericError("train_cgan: epoch " + std::to_string(epoch) + " side G: " +
                               e.what());
        }
        model.generator = sgd_momentum_step(std::move(model.generator), g.generator_grad,
                                            hyper.lr, hyper.momentum);
        model.trace.emplace_back(d.value.total, g.loss.total);
    }
    return model;
}

GrayImage sample_cgan(const CganModel& model, const std::vector<double>& condition,
                      std::uint64_t seed) {
    check_condition(condition);
    Rng rng(derive_seed(seed, "cgan-sample"));
    std::vector<double> z(static_cast<std::size_t>(model.noise_dim));
    for (double& v : z) v = rng.normal();
    const auto outs = forward(model.generator, concat(z, condition));
    GrayImage img(model.image_w, model.image_h);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(outs.back()[i], 0.0, 1.0);
    return img;
}

std::string to_string(GenMethod m) {
    switch (m) {
        case GenMethod::kVae: return "vae";
        case GenMethod::kCgan: return "cgan";
        case GenMethod::kVaeSsi: return "vae-ssi";
    }
    return "?";
}

GenMethod gen_method_from_string(const std::string& s) {
    if (s == "vae") return GenMethod::kVae;
    if (s == "cgan") return GenMethod::kCgan;
    if (s == "vae-ssi" || s == "vae_ssi") return GenMethod::kVaeSsi;
    throw ValidationError("unknown generation method '" + s + "'");
}

void GenerationJob::validate() const {
    if (samples_requested < 1)
        throw ValidationError("GenerationJob: samples_requested must be >= 1");
    if (epochs < 1) throw ValidationError("GenerationJob: epochs must be >= 1");
    if (sampling_interval < 1 || epochs % sampling_interval != 0)
        throw ValidationError("GenerationJob: sampling interval " +
                              std::to_string(sampling_interval) + " must divide the epoch budget " +
                              std::to_string(epochs));
    if (band_low >= band_high)
        throw ValidationError("GenerationJob: band low " + std::to_string(band_low) +
                              " must be below band high " + std::to_string(band_high));
    if (restart_budget < 1) throw ValidationError("GenerationJob: restart_budget must be >= 1");
    ssim.validate();
}

double SyntheticSet::mean_ssim() const {
    if (samples.empty()) throw ValidationError("SyntheticSet: empty set has no mean SSIM");
    double acc = 0.0;
    for (const auto& s : samples) acc += s.ssim_to_reference;
    return acc / static_cast<double>(samples.size());
}

namespace {

void check_reference(const SignatureSample& reference) {
    if (reference.split == Split::kUnassigned)
        throw ValidationError("generation: reference has no split; partition inheritance needs one");
}

Provenance provenance_for(GenMethod m) {
    switch (m) {
        case GenMethod::kVae: return Provenance::kVae;
        case GenMethod::kCgan: return Provenance::kCgan;
        case GenMethod::kVaeSsi: return Provenance::kVaeSsi;
    }
    return Provenance::kVae;
}

}  // namespace

SyntheticSet generate_epoch_guided(const SignatureSample& reference, int reference_index,
                                   const GenerationJob& job) {
    job.validate();
    check_reference(reference);
    if (job.method == GenMethod::kVaeSsi)
        throw ValidationError("generate_epoch_guided: use generate_ssim_controlled for vae-ssi");

    SyntheticSet set;
    set.provenance = provenance_for(job.method);

    const std::uint64_t train_seed =
        derive_seed(job.seed, "epoch-guided-train", static_cast<std::uint64_t>(reference_index));

    VaeModel vae;
    CganModel cgan;
    if (job.method == GenMethod::kVae)
        vae = train_vae(reference.image, job.epochs, job.vae, train_seed);
    else
        cgan = train_cgan(reference.image, reference.label, job.epochs, job.cgan, train_seed);

    for (int k = 0; k < job.samples_requested; ++k) {
        const std::uint64_t sample_seed =
            derive_seed(job.seed, "epoch-guided-sample",
                        (static_cast<std::uint64_t>(reference_index) << 16) |
                            static_cast<std::uint64_t>(k));
        GrayImage raw = job.method == GenMethod::kVae
                            ? sample_vae(vae, sample_seed)
                            : sample_cgan(cgan, condition_one_hot(reference.label), sample_seed);
        SyntheticSample s;
        s.image = quantize8(raw);
        s.user_id = reference.user_id;
        s.provenance = set.provenance;
        s.partition = reference.split;
        s.ssim_to_reference = ssim_score(s.image, reference.image, job.ssim);
        s.reference_index = reference_index;
        s.sample_seed = sample_seed;
        s.epochs_used = job.epochs;
        s.restarts = 0;
        set.samples.push_back(std::move(s));
    }
    return set;
}

SyntheticSet generate_ssim_controlled(const SignatureSample& reference, int reference_index,
                                      const GenerationJob& job) {
    job.validate();
    check_reference(reference);
    if (job.method != GenMethod::kVaeSsi && job.method != GenMethod::kVae)
        throw ValidationError(
            "generate_ssim_controlled: only the VAE supports SSIM-controlled generation; "
            "the CGAN cannot cover the required SSIM range");

    SyntheticSet set;
    set.provenance = Provenance::kVaeSsi;

    for (int k = 0; k < job.samples_requested; ++k) {
        std::vector<double> ssims_seen;
        bool kept = false;
        for (int attempt = 0; attempt < job.restart_budget && !kept; ++attempt) {
            const std::uint64_t run_seed =
                derive_seed(job.seed, "ssi-run",
                            (static_cast<std::uint64_t>(reference_index) << 24) |
                                (static_cast<std::uint64_t>(k) << 8) |
                                static_cast<std::uint64_t>(attempt));
            VaeModel model = make_vae(reference.image.width, reference.image.height, job.vae,
                                      run_seed);
            Rng noise_stream(derive_seed(run_seed, "vae-noise"));
            std::vector<double> noise(static_cast<std::size_t>(model.latent_dim));
            for (int epoch = 1; epoch <= job.epochs && !kept; ++epoch) {
                for (double& n : noise) n = noise_stream.normal();
                VaeGrad grad;
                try {
                    grad = vae_loss_and_grad(model, reference.image.pixels, noise);
                } catch (const NumericError& e) {
                    throw NumericError("generate_ssim_controlled: epoch " +
                                       std::to_string(epoch) + ": " + e.what());
                }
                model.encoder = sgd_momentum_step(std::move(model.encoder), grad.encoder_grad,
                                                  job.vae.lr, job.vae.momentum);
                model.decoder = sgd_momentum_step(std::move(model.decoder), grad.decoder_grad,
                                                  job.vae.lr, job.vae.momentum);
                if (epoch % job.sampling_interval != 0) continue;

                // One candidate per checkpoint.
                const std::uint64_t sample_seed = derive_seed(run_seed, "ssi-candidate",
                                                              static_cast<std::uint64_t>(epoch));
                SyntheticSample s;
                s.image = quantize8(sample_vae(model, sample_seed));
                s.ssim_to_reference = ssim_score(s.image, reference.image, job.ssim);
                ssims_seen.push_back(s.ssim_to_reference);
                if (s.ssim_to_reference < job.band_low || s.ssim_to_reference > job.band_high)
                    continue;
                s.user_id = reference.user_id;
                s.provenance = Provenance::kVaeSsi;
                s.partition = reference.split;
                s.reference_index = reference_index;
                s.sample_seed = sample_seed;
                s.epochs_used = epoch;
                s.restarts = attempt;
                set.samples.push_back(std::move(s));
                kept = true;
            }
        }
        if (!kept) {
            std::string seen;
            for (std::size_t i = 0; i < ssims_seen.size(); ++i) {
                if (i) seen += ", ";
                if (i >= 24) {
                    seen += "...";
                    break;
                }
                seen += std::to_string(ssims_seen[i]);
            }
            throw Error("generate_ssim_controlled: restart budget " +
                        std::to_string(job.restart_budget) + " exhausted for sample " +
                        std::to_string(k) + " of reference " + std::to_string(reference_index) +
                        " after " + std::to_string(ssims_seen.size()) +
                        " candidates; SSIM values seen: [" + seen + "]");
        }
    }
    return set;
}

void save_synthetic(const SyntheticSet& set, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir / "synthetic.jsonl", std::ios::trunc);
    if (!manifest) throw IoError((dir / "synthetic.jsonl").string() + ": cannot open for writing");
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const SyntheticSample& s = set.samples[i];
        char name[32];
        std::snprintf(name, sizeof name, "synthetic_%05zu.pgm", i);
        save_pgm(s.image, dir / name);
        nlohmann::json j;
        j["file"] = name;
        j["user_id"] = s.user_id;
        j["provenance"] = to_string(s.provenance);
        j["partition"] = to_string(s.partition);
        j["ssim"] = s.ssim_to_reference;
        j["reference_index"] = s.reference_index;
        j["seed"] = s.sample_seed;
        j["epochs_used"] = s.epochs_used;
        j["restarts"] = s.restarts;
        manifest << j.dump() << "\n";
    }
}

SyntheticSet load_synthetic(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "synthetic.jsonl");
    if (!manifest) throw IoError((dir / "synthetic.jsonl").string() + ": cannot open file");
    SyntheticSet set;
    std::string line;
    bool first = true;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        SyntheticSample s;
        s.image = load_pgm(dir / j.at("file").get<std::string>());
        s.user_id = j.at("user_id").get<int>();
        s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
        s.partition = split_from_string(j.at("partition").get<std::string>());
        s.ssim_to_reference = j.at("ssim").get<double>();
        s.reference_index = j.at("reference_index").get<int>();
        s.sample_seed = j.at("seed").get<std::uint64_t>();
        s.epochs_used = j.at("epochs_used").get<int>();
        s.restarts = j.at("restarts").get<int>();
        if (first) {
            set.provenance = s.provenance;
            first = false;
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

}  // namespace sigforge
