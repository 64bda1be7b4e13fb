#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "sigforge/corpus.hpp"
#include "sigforge/errors.hpp"
#include "sigforge/generative.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/rng.hpp"

using namespace sigforge;
namespace fs = std::filesystem;

namespace {

// A small preprocessed corpus reference with a split assigned.
SignatureSample tiny_reference(int size = 24, std::uint64_t seed = 7) {
    CorpusConfig cfg;
    cfg.users = 1;
    cfg.genuine_per_user = 1;
    cfg.forged_per_user = 1;
    cfg.image_size = 48;
    cfg.master_seed = seed;
    auto samples = generate_corpus(cfg);
    SignatureSample ref = samples[1];  // the forgery
    ref.image = preprocess(ref.image, size);
    ref.split = Split::kTrain;
    return ref;
}

VaeHyper tiny_vae() {
    VaeHyper h;
    h.latent_dim = 6;
    h.hidden = 24;
    h.lr = 1e-3;
    return h;
}

CganHyper tiny_cgan() {
    CganHyper h;
    h.noise_dim = 8;
    h.hidden = 24;
    h.lr = 5e-4;
    return h;
}

GenerationJob small_job(GenMethod method) {
    GenerationJob job;
    job.method = method;
    job.samples_requested = 3;
    job.epochs = 100;
    job.sampling_interval = 5;
    job.seed = 11;
    job.vae = tiny_vae();
    job.cgan = tiny_cgan();
    job.ssim.window_size = 7;  // references here are small
    return job;
}

}  // namespace

TEST_CASE("kl term vanishes for a standard-normal posterior") {
    VaeModel model = make_vae(4, 4, tiny_vae(), 1);
    // Force the encoder to output mu = 0, logvar = 0.
    for (double& p : model.encoder.params) p = 0.0;
    const std::vector<double> image(16, 0.5);
    const std::vector<double> noise(6, 0.3);
    const VaeGrad g = vae_loss_and_grad(model, image, noise);
    REQUIRE(g.loss.components.size() == 2);
    CHECK(g.loss.components[1].first == "kl");
    CHECK(g.loss.components[1].second == 0.0);
}

TEST_CASE("vae training reduces the loss on a corpus reference") {
    const SignatureSample ref = tiny_reference(32);
    const VaeModel model = train_vae(ref.image, 200, tiny_vae(), 7);
    REQUIRE(model.trace.size() == 200);
    for (const auto& loss : model.trace) CHECK_NOTHROW(loss.validate());
    CHECK(model.trace.back().total < model.trace.front().total);
}

TEST_CASE("vae elbo gradient passes the finite-difference check") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        VaeModel model = make_vae(4, 4, VaeHyper{.latent_dim = 3, .hidden = 8}, seed);
        Rng rng(seed + 50);
        std::vector<double> image(16);
        for (double& v : image) v = rng.uniform(0.05, 0.95);
        std::vector<double> noise(3);
        for (double& v : noise) v = rng.normal();
        const VaeGrad g = vae_loss_and_grad(model, image, noise);

        const double enc_err = grad_check(
            [&](const std::vector<double>& p) {
                VaeModel probe = model;
                probe.encoder.params = p;
                return vae_loss_and_grad(probe, image, noise).loss.total;
            },
            model.encoder.params, g.encoder_grad, 1e-5);
        REQUIRE(enc_err < 1e-4);

        const double dec_err = grad_check(
            [&](const std::vector<double>& p) {
                VaeModel probe = model;
                probe.decoder.params = p;
                return vae_loss_and_grad(probe, image, noise).loss.total;
            },
            model.decoder.params, g.decoder_grad, 1e-5);
        REQUIRE(dec_err < 1e-4);
    }
}

TEST_CASE("vae sampling is seeded and a zero decoder yields flat gray") {
    VaeModel model = make_vae(8, 8, tiny_vae(), 3);
    CHECK(sample_vae(model, 9) == sample_vae(model, 9));

    for (double& p : model.decoder.params) p = 0.0;
    const GrayImage flat = sample_vae(model, 4);
    for (double v : flat.pixels) CHECK(v == 0.5);
}

TEST_CASE("training pulls samples toward the reference") {
    const SignatureSample ref = tiny_reference(24);
    const VaeModel untrained = make_vae(24, 24, tiny_vae(), 21);
    const VaeModel trained = train_vae(ref.image, 400, tiny_vae(), 21);
    SsimParams p;
    double before = 0.0, after = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        before += ssim_score(quantize8(sample_vae(untrained, seed)), ref.image, p);
        after += ssim_score(quantize8(sample_vae(trained, seed)), ref.image, p);
    }
    CHECK(after / 10.0 > before / 10.0);
}

TEST_CASE("a coin-flip discriminator scores two ln one-half") {
    CganModel model = make_cgan(4, 4, tiny_cgan(), 5);
    for (double& p : model.discriminator.params) p = 0.0;  // sigmoid(0) = 0.5
    const std::vector<double> real(16, 0.8), fake(16, 0.2);
    const auto d = gan_discriminator_value_and_grad(model, real, fake,
                                                    condition_one_hot(Label::kForged));
    CHECK(d.value.total == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("gan gradients pass the finite-difference check on both sides") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const CganModel model = make_cgan(4, 4, CganHyper{.noise_dim = 5, .hidden = 8}, seed);
        Rng rng(seed + 77);
        std::vector<double> real(16), fake(16), noise(5);
        for (double& v : real) v = rng.uniform(0.05, 0.95);
        for (double& v : fake) v = rng.uniform(0.05, 0.95);
        for (double& v : noise) v = rng.normal();
        const auto y = condition_one_hot(Label::kForged);

        const auto d = gan_discriminator_value_and_grad(model, real, fake, y);
        const double d_err = grad_check(
            [&](const std::vector<double>& p) {
                CganModel probe = model;
                probe.discriminator.params = p;
                // The ascent gradient is for -V.
                return -gan_discriminator_value_and_grad(probe, real, fake, y).value.total;
            },
            model.discriminator.params, d.ascent_grad, 1e-5);
        REQUIRE(d_err < 1e-4);

        const auto g = gan_generator_loss_and_grad(model, noise, y);
        const double g_err = grad_check(
            [&](const std::vector<double>& p) {
                CganModel probe = model;
                probe.generator.params = p;
                return gan_generator_loss_and_grad(probe, noise, y).loss.total;
            },
            model.generator.params, g.generator_grad, 1e-5);
        REQUIRE(g_err < 1e-4);
    }
}

TEST_CASE("cgan training keeps both losses finite for the full budget") {
    const SignatureSample ref = tiny_reference(24);
    const CganModel model = train_cgan(ref.image, ref.label, 800, tiny_cgan(), 7);
    REQUIRE(model.trace.size() == 800);
    for (const auto& [d_value, g_loss] : model.trace) {
        REQUIRE(std::isfinite(d_value));
        REQUIRE(std::isfinite(g_loss));
    }
}

TEST_CASE("cgan sampling honors seed and condition") {
    CganModel model = make_cgan(6, 6, tiny_cgan(), 2);
    const auto forged = condition_one_hot(Label::kForged);
    const auto genuine = condition_one_hot(Label::kGenuine);
    CHECK(sample_cgan(model, forged, 5) == sample_cgan(model, forged, 5));
    CHECK(sample_cgan(model, forged, 5).pixels != sample_cgan(model, genuine, 5).pixels);

    for (double& p : model.generator.params) p = 0.0;
    for (double v : sample_cgan(model, forged, 3).pixels) CHECK(v == 0.5);

    CHECK_THROWS_AS(sample_cgan(model, {1.0, 1.0}, 1), ValidationError);
    CHECK_THROWS_AS(sample_cgan(model, {0.5, 0.5}, 1), ValidationError);
}

TEST_CASE("epoch-guided generation delivers the requested samples with SSIMs") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kVae);
    job.samples_requested = 9;
    const SyntheticSet set = generate_epoch_guided(ref, 0, job);
    REQUIRE(set.samples.size() == 9);
    for (const auto& s : set.samples) {
        CHECK(s.ssim_to_reference >= -1.0);
        CHECK(s.ssim_to_reference <= 1.0);
        CHECK(s.partition == ref.split);
        CHECK(s.provenance == Provenance::kVae);
        CHECK(s.user_id == ref.user_id);
    }
}

TEST_CASE("generation is deterministic for an identical job") {
    const SignatureSample ref = tiny_reference(24);
    const GenerationJob job = small_job(GenMethod::kCgan);
    const SyntheticSet a = generate_epoch_guided(ref, 0, job);
    const SyntheticSet b = generate_epoch_guided(ref, 0, job);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].ssim_to_reference == b.samples[i].ssim_to_reference);
    }
}

TEST_CASE("ssim-controlled generation keeps only in-band samples") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kVaeSsi);
    job.samples_requested = 2;
    job.epochs = 200;
    job.band_low = 0.04;
    job.band_high = 0.08;
    const SyntheticSet set = generate_ssim_controlled(ref, 0, job);
    REQUIRE(set.samples.size() == 2);
    for (const auto& s : set.samples) {
        CHECK(s.ssim_to_reference >= job.band_low);
        CHECK(s.ssim_to_reference <= job.band_high);
        CHECK(s.provenance == Provenance::kVaeSsi);
        CHECK(s.epochs_used % job.sampling_interval == 0);
    }
}

TEST_CASE("an all-pass band stops at the first checkpoint") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kVaeSsi);
    job.samples_requested = 1;
    job.band_low = -1.0;
    job.band_high = 1.0;
    const SyntheticSet set = generate_ssim_controlled(ref, 0, job);
    REQUIRE(set.samples.size() == 1);
    CHECK(set.samples[0].epochs_used == job.sampling_interval);
    CHECK(set.samples[0].restarts == 0);
}

TEST_CASE("an impossible band exhausts the restart budget with diagnostics") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kVaeSsi);
    job.samples_requested = 1;
    job.epochs = 10;
    job.restart_budget = 2;
    job.band_low = 0.99990;
    job.band_high = 0.99995;
    CHECK_THROWS_WITH_AS(generate_ssim_controlled(ref, 0, job),
                         doctest::Contains("restart budget"), Error);
}

TEST_CASE("ssim-controlled mode rejects the cgan") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kCgan);
    CHECK_THROWS_WITH_AS(generate_ssim_controlled(ref, 0, job), doctest::Contains("VAE"),
                         ValidationError);
}

TEST_CASE("generation requires a split reference and validates the job") {
    SignatureSample ref = tiny_reference(24);
    ref.split = Split::kUnassigned;
    CHECK_THROWS_AS(generate_epoch_guided(ref, 0, small_job(GenMethod::kVae)), ValidationError);

    GenerationJob bad_band = small_job(GenMethod::kVae);
    bad_band.band_low = 0.5;
    bad_band.band_high = 0.5;
    CHECK_THROWS_WITH_AS(bad_band.validate(), doctest::Contains("band"), ValidationError);

    GenerationJob bad_interval = small_job(GenMethod::kVae);
    bad_interval.sampling_interval = 7;  // does not divide 100
    CHECK_THROWS_WITH_AS(bad_interval.validate(), doctest::Contains("interval"), ValidationError);
}

TEST_CASE("synthetic sets round trip through the directory format") {
    const SignatureSample ref = tiny_reference(24);
    GenerationJob job = small_job(GenMethod::kVae);
    const SyntheticSet set = generate_epoch_guided(ref, 3, job);
    const fs::path dir = fs::temp_directory_path() / "sigforge_synth_roundtrip";
    fs::remove_all(dir);
    save_synthetic(set, dir);
    const SyntheticSet back = load_synthetic(dir);
    REQUIRE(back.samples.size() == set.samples.size());
    CHECK(back.provenance == set.provenance);
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        CHECK(back.samples[i].image == set.samples[i].image);
        CHECK(back.samples[i].ssim_to_reference == set.samples[i].ssim_to_reference);
        CHECK(back.samples[i].reference_index == set.samples[i].reference_index);
        CHECK(back.samples[i].partition == set.samples[i].partition);
    }
}
