#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stmre/tensor.hpp"

namespace stmre {

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Positive iff score >= threshold. Labels are 1 (positive) or 0.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Rates with a zero denominator come back as 0 with their flag set.
struct ScalarMetrics {
    double accuracy = 0, sensitivity = 0, specificity = 0, precision = 0, f_score = 0, mcc = 0;
    bool sensitivity_undefined = false;
    bool specificity_undefined = false;
    bool precision_undefined = false;
    bool f_score_undefined = false;
    bool mcc_undefined = false;
};

ScalarMetrics scalar_metrics(const ConfusionCounts& c);

/// Harmonic mean of precision and sensitivity; 0 when both are 0.
double f_score(double precision, double sensitivity);

struct CurvePoint {
    double x = 0, y = 0;
};

struct Curve {
    std::vector<CurvePoint> points;
    double auc = 0;
};

/// (fpr, tpr) from (0,0) to (1,1), one point per distinct score, descending
/// threshold. Trapezoidal area; equals the pairwise concordance with ties at 1/2.
Curve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// (recall, precision) per distinct score, led by (0, precision at the top threshold).
Curve pr_curve(std::span<const double> scores, std::span<const int> labels);

/// P(score_pos > score_neg) + P(tie)/2 by sorting, O(n log n).
double concordance_auc(std::span<const double> scores, std::span<const int> labels);

/// Two-sided standard normal quantile for a central `level`, e.g. 0.95 -> 1.959964.
double normal_quantile_two_sided(double level);

double wald_half_width(double p_hat, std::size_t n, double level = 0.95);

struct Interval {
    double low = 0, high = 0;
};

Interval wilson_interval(double p_hat, std::size_t n, double level = 0.95);

enum class CiMethod { Wald, Wilson };

/// Percentile bootstrap, resampling positives and negatives separately.
/// Replicate b draws from Rng(derive_seed(seed, b)). The interval is widened
/// to include the point estimate when the percentiles miss it.
Interval auc_ci(std::span<const double> scores, std::span<const int> labels, double level = 0.95,
                std::size_t n_boot = 2000, std::uint64_t seed = 0);

/// Linear-interpolated quantile of sorted values (position q*(n-1)).
double sorted_quantile(const std::vector<double>& sorted, double q);

struct PcaResult {
    TensorT<double> projected;               // [N, k']
    std::vector<double> explained_variance;  // eigenvalues, descending
    std::vector<double> explained_ratio;     // share of the total variance
    TensorT<double> directions;              // [k', F], orthonormal rows
};

/// Top-k principal components of row-wise samples (covariance with N-1).
/// Returns fewer than k components, with a warning, when the centred data has
/// lower rank.
PcaResult pca_project(const TensorT<double>& features, std::size_t k = 2);
PcaResult pca_project(const Tensor& features, std::size_t k = 2);

struct EvalOptions {
    double threshold = 0.5;
    double level = 0.95;
    CiMethod ci_method = CiMethod::Wald;
    std::size_t n_boot = 2000;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::size_t n = 0;
    double threshold = 0.5;
    ConfusionCounts counts;
    ScalarMetrics metrics;
    CiMethod ci_method = CiMethod::Wald;
    double level = 0.95;
    double sensitivity_half_width = 0;  // Wald
    Interval sensitivity_wilson;
    Curve roc, pr;
    Interval auc_ci;
    std::size_t n_boot = 0;

    std::string to_json() const;
    void write_json(const std::filesystem::path& path) const;

    /// One "x,y" point per line after a header.
    static void write_curve_csv(const Curve& curve, const std::string& x_name, const std::string& y_name,
                                const std::filesystem::path& path);

    /// Standalone SVG with axes, the curve polyline and an AUC label.
    static std::string curve_svg(const Curve& curve, const std::string& title, const std::string& x_name,
                                 const std::string& y_name, bool chance_diagonal);

    /// report.json, roc.csv, pr.csv, roc.svg and pr.svg under `dir`.
    void write_all(const std::filesystem::path& dir) const;
};

/// Full report over positive-class scores. Requires both classes.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, const EvalOptions& options = {});

/// PCA scatter of 2-D projected points coloured by label.
std::string pca_svg(const PcaResult& pca, std::span<const int> labels, const std::string& title);

}  // namespace stmre
