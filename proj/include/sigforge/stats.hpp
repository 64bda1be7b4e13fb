#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sigforge/attack.hpp"
#include "sigforge/countermeasure.hpp"
#include "sigforge/generative.hpp"

namespace sigforge {

// Product-moment correlation. Rejects n < 3 and zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// Least squares; r_squared equals pearson^2 whenever y has variance and is
// defined as 0 for a constant y. Rejects zero x-variance.
LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys);

enum class PValueMethod { kPermutation, kTApprox };

// Two-tailed p-value for the observed correlation.
//   permutation: exhaustive over all n! pairings when n! <= permutations
//     (exact, no smoothing), otherwise Monte Carlo with +1 smoothing; each
//     sampled permutation is evaluated together with its inverse so the
//     result is exactly invariant to swapping x and y.
//   t-approx: t = r sqrt((n-2)/(1-r^2)) against Student's t via the
//     regularized incomplete beta function.
double p_value(const std::vector<double>& xs, const std::vector<double>& ys,
               PValueMethod method = PValueMethod::kPermutation, int permutations = 10000,
               std::uint64_t seed = 0);

struct CorrelationResult {
    double r = 0.0;
    double r_squared = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    double slope = 0.0;
    double intercept = 0.0;
    std::string method;  // "permutation" or "t-approx"
};

struct StudyPoint {
    std::string set_tag;
    double mean_ssim = 0.0;
    double far = 0.0;
    std::size_t attempts = 0;
};

// SSIM-vs-FAR study. Each synthetic set contributes per-sample (SSIM, accept)
// observations against every model; points are either one per set or binned
// by SSIM bands of the given width.
struct SsimFarStudy {
    CorrelationResult correlation;
    std::vector<StudyPoint> points;
};

struct StudyOptions {
    bool band_binning = true;
    double band_width = 0.1;
    int permutations = 10000;
    std::uint64_t seed = 0;
    PValueMethod method = PValueMethod::kPermutation;
    int image_size = 64;
};

SsimFarStudy ssim_far_study(const std::vector<const SyntheticSet*>& sets,
                            const std::vector<const BlackBoxVerifier*>& models,
                            const StudyOptions& options);

// Builds the study from precomputed points (already-aggregated means).
SsimFarStudy study_from_points(std::vector<StudyPoint> points, const StudyOptions& options);

// Report emitters. Every emitted file re-parses to the in-memory values.
void emit_report_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport parse_report_csv(const std::filesystem::path& path);

// Heatmap layout: rows = model tag, columns = scenarios, values = FAR.
void emit_heatmap_csv(const EvalReport& report, const std::filesystem::path& path);

// Radar layout: one row per model aggregate with FAR and FRR per scenario.
void emit_radar_csv(const EvalReport& report, const std::filesystem::path& path);

void emit_study_csv(const SsimFarStudy& study, const std::filesystem::path& path);
SsimFarStudy parse_study_csv(const std::filesystem::path& path);

// Scatter of study points with the fitted line.
void emit_study_svg(const SsimFarStudy& study, const std::filesystem::path& path);

void emit_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path);

}  // namespace sigforge
