#include "stmre/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "stmre/error.hpp"
#include "stmre/log.hpp"
#include "stmre/rng.hpp"

namespace stmre {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                            std::to_string(labels.size()) + ")");
    }
    for (int l : labels)
        if (l != 0 && l != 1) throw ArgumentError("labels must be 0 or 1, got " + std::to_string(l));
    for (double s : scores)
        if (!std::isfinite(s)) throw ArgumentError("scores must be finite");
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
    std::size_t pos = 0;
    for (int l : labels) pos += l == 1;
    return {pos, labels.size() - pos};
}

void require_both_classes(std::span<const int> labels, const char* what) {
    auto [pos, neg] = class_counts(labels);
    if (pos == 0 || neg == 0) throw MetricError(std::string(what) + " needs both classes present");
}

/// Cumulative (tp, fp) after each distinct score, scanning from the highest.
struct Sweep {
    std::vector<std::size_t> tp, fp;
    std::size_t pos = 0, neg = 0;
};

Sweep threshold_sweep(std::span<const double> scores, std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    Sweep s;
    std::tie(s.pos, s.neg) = class_counts(labels);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (labels[order[i]] == 1) ++tp;
        else ++fp;
        if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) {
            s.tp.push_back(tp);
            s.fp.push_back(fp);
        }
    }
    return s;
}

double trapezoid(const std::vector<CurvePoint>& pts) {
    double area = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) area += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) / 2;
    return area;
}

double ratio_or_zero(std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json curve_json(const Curve& c, const char* x, const char* y) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({{x, p.x}, {y, p.y}});
    return {{"auc", c.auc}, {"points", pts}};
}

const char* ci_name(CiMethod m) { return m == CiMethod::Wald ? "wald" : "wilson"; }

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_inputs(scores, labels);
    if (scores.empty()) throw ArgumentError("confusion needs at least one record");
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
        else (predicted ? c.fp : c.tn)++;
    }
    return c;
}

double f_score(double precision, double sensitivity) {
    return precision + sensitivity == 0 ? 0.0 : 2 * precision * sensitivity / (precision + sensitivity);
}

ScalarMetrics scalar_metrics(const ConfusionCounts& c) {
    ScalarMetrics m;
    bool unused = false;
    m.accuracy = ratio_or_zero(c.tp + c.tn, c.total(), unused);
    m.sensitivity = ratio_or_zero(c.tp, c.tp + c.fn, m.sensitivity_undefined);
    m.specificity = ratio_or_zero(c.tn, c.tn + c.fp, m.specificity_undefined);
    m.precision = ratio_or_zero(c.tp, c.tp + c.fp, m.precision_undefined);
    m.f_score_undefined = m.precision + m.sensitivity == 0;
    m.f_score = f_score(m.precision, m.sensitivity);
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc_undefined = den == 0;
    m.mcc = den == 0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(den);
    return m;
}

Curve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    require_both_classes(labels, "ROC curve");
    const auto s = threshold_sweep(scores, labels);
    Curve c;
    c.points.push_back({0.0, 0.0});
    for (std::size_t i = 0; i < s.tp.size(); ++i) {
        c.points.push_back({static_cast<double>(s.fp[i]) / s.neg, static_cast<double>(s.tp[i]) / s.pos});
    }
    c.auc = trapezoid(c.points);
    return c;
}

Curve pr_curve(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    if (class_counts(labels).first == 0) throw MetricError("PR curve needs at least one positive");
    const auto s = threshold_sweep(scores, labels);
    Curve c;
    for (std::size_t i = 0; i < s.tp.size(); ++i) {
        const double precision = static_cast<double>(s.tp[i]) / static_cast<double>(s.tp[i] + s.fp[i]);
        if (i == 0) c.points.push_back({0.0, precision});
        c.points.push_back({static_cast<double>(s.tp[i]) / s.pos, precision});
    }
    c.auc = trapezoid(c.points);
    return c;
}

double concordance_auc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    require_both_classes(labels, "AUC");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the concordant count keeps half-credit ties exact in integers.
    std::uint64_t twice = 0, neg_below = 0;
    auto [pos, neg] = class_counts(labels);
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t p = 0, q = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? p : q)++;
            ++j;
        }
        twice += p * (2 * neg_below + q);
        neg_below += q;
        i = j;
    }
    return static_cast<double>(twice) / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

double normal_quantile_two_sided(double level) {
    if (!(level > 0 && level < 1)) throw ArgumentError("confidence level must lie in (0, 1)");
    const double p = 0.5 + level / 2;
    // Acklam's rational approximation, then Halley steps on erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    double x;
    if (p > 1 - 0.02425) {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    for (int it = 0; it < 2; ++it) {
        const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
        const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
        x -= u / (1 + x * u / 2);
    }
    return x;
}

double wald_half_width(double p_hat, std::size_t n, double level) {
    if (!(p_hat >= 0 && p_hat <= 1)) throw ArgumentError("proportion must lie in [0, 1]");
    if (n == 0) throw ArgumentError("binomial interval needs n >= 1");
    return normal_quantile_two_sided(level) * std::sqrt(p_hat * (1 - p_hat) / static_cast<double>(n));
}

Interval wilson_interval(double p_hat, std::size_t n, double level) {
    if (!(p_hat >= 0 && p_hat <= 1)) throw ArgumentError("proportion must lie in [0, 1]");
    if (n == 0) throw ArgumentError("binomial interval needs n >= 1");
    const double z = normal_quantile_two_sided(level), nn = static_cast<double>(n), z2 = z * z;
    const double centre = (p_hat + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z / (1 + z2 / nn) * std::sqrt(p_hat * (1 - p_hat) / nn + z2 / (4 * nn * nn));
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ArgumentError("quantile of an empty sample");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval auc_ci(std::span<const double> scores, std::span<const int> labels, double level, std::size_t n_boot,
                std::uint64_t seed) {
    check_inputs(scores, labels);
    require_both_classes(labels, "AUC interval");
    if (!(level > 0 && level < 1)) throw ArgumentError("confidence level must lie in (0, 1)");
    if (n_boot == 0) throw ArgumentError("bootstrap needs at least one replicate");
    std::vector<double> pos_scores, neg_scores;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos_scores : neg_scores).push_back(scores[i]);

    std::vector<double> aucs(n_boot);
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t b = 0; b < n_boot; ++b) {
        Rng rng(derive_seed(seed, b));
        s.clear();
        l.clear();
        for (std::size_t i = 0; i < pos_scores.size(); ++i) {
            s.push_back(pos_scores[rng.below(pos_scores.size())]);
            l.push_back(1);
        }
        for (std::size_t i = 0; i < neg_scores.size(); ++i) {
            s.push_back(neg_scores[rng.below(neg_scores.size())]);
            l.push_back(0);
        }
        aucs[b] = concordance_auc(s, l);
    }
    std::sort(aucs.begin(), aucs.end());
    const double alpha = 1 - level;
    Interval ci{sorted_quantile(aucs, alpha / 2), sorted_quantile(aucs, 1 - alpha / 2)};
    const double point = concordance_auc(scores, labels);
    ci.low = std::min(ci.low, point);
    ci.high = std::max(ci.high, point);
    return ci;
}

PcaResult pca_project(const TensorT<double>& features, std::size_t k) {
    if (features.rank() != 2) throw DimensionError("PCA expects [N, F] features, got " + shape_str(features.shape()));
    const std::size_t n = features.dim(0), f = features.dim(1);
    if (n < 2) throw ArgumentError("PCA needs at least two samples");
    if (k == 0 || k > f) throw ArgumentError("PCA component count must lie in [1, " + std::to_string(f) + "]");

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(features.data(), n, f);
    const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
    const Eigen::VectorXd values = solver.eigenvalues();  // ascending
    const double total = std::max(0.0, values.sum());
    const double top = values(f - 1);
    const double tol = top * 1e-10 * static_cast<double>(std::max(n, f));

    std::size_t kept = 0;
    while (kept < k && values(f - 1 - kept) > tol) ++kept;
    if (kept < k) {
        log_warning("feature matrix has rank " + std::to_string(kept) + " < " + std::to_string(k) +
                    "; returning " + std::to_string(kept) + " principal components");
    }

    PcaResult r;
    r.directions = TensorT<double>({kept, f});
    r.projected = TensorT<double>({n, kept});
    for (std::size_t j = 0; j < kept; ++j) {
        const Eigen::Index col = static_cast<Eigen::Index>(f - 1 - j);
        Eigen::VectorXd dir = solver.eigenvectors().col(col);
        // Sign convention: the largest-magnitude entry is positive.
        Eigen::Index arg = 0;
        dir.cwiseAbs().maxCoeff(&arg);
        if (dir(arg) < 0) dir = -dir;
        r.explained_variance.push_back(values(col));
        r.explained_ratio.push_back(total > 0 ? values(col) / total : 0.0);
        for (std::size_t t = 0; t < f; ++t) r.directions[j * f + t] = dir(static_cast<Eigen::Index>(t));
        const Eigen::VectorXd proj = centred * dir;
        for (std::size_t i = 0; i < n; ++i) r.projected[i * kept + j] = proj(static_cast<Eigen::Index>(i));
    }
    return r;
}

PcaResult pca_project(const Tensor& features, std::size_t k) {
    TensorT<double> d(features.shape());
    for (std::size_t i = 0; i < features.numel(); ++i) d[i] = features[i];
    return pca_project(d, k);
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, const EvalOptions& options) {
    check_inputs(scores, labels);
    require_both_classes(labels, "evaluation");
    EvalReport r;
    r.n = scores.size();
    r.threshold = options.threshold;
    r.counts = confusion(scores, labels, options.threshold);
    r.metrics = scalar_metrics(r.counts);
    r.ci_method = options.ci_method;
    r.level = options.level;
    const std::size_t positives = r.counts.tp + r.counts.fn;
    r.sensitivity_half_width = wald_half_width(r.metrics.sensitivity, positives, options.level);
    r.sensitivity_wilson = wilson_interval(r.metrics.sensitivity, positives, options.level);
    r.roc = roc_curve(scores, labels);
    r.pr = pr_curve(scores, labels);
    r.n_boot = options.n_boot;
    r.auc_ci = auc_ci(scores, labels, options.level, options.n_boot, options.seed);
    return r;
}

std::string EvalReport::to_json() const {
    const auto& m = metrics;
    nlohmann::json undefined = nlohmann::json::array();
    if (m.sensitivity_undefined) undefined.push_back("sensitivity");
    if (m.specificity_undefined) undefined.push_back("specificity");
    if (m.precision_undefined) undefined.push_back("precision");
    if (m.f_score_undefined) undefined.push_back("f_score");
    if (m.mcc_undefined) undefined.push_back("mcc");
    nlohmann::json sens_ci = {{"method", ci_name(ci_method)}, {"level", level}};
    if (ci_method == CiMethod::Wald) {
        sens_ci["half_width"] = sensitivity_half_width;
    } else {
        sens_ci["low"] = sensitivity_wilson.low;
        sens_ci["high"] = sensitivity_wilson.high;
    }
    nlohmann::json j = {
        {"n", n},
        {"threshold", threshold},
        {"confusion", {{"tp", counts.tp}, {"tn", counts.tn}, {"fp", counts.fp}, {"fn", counts.fn}}},
        {"accuracy", m.accuracy},
        {"sensitivity", m.sensitivity},
        {"specificity", m.specificity},
        {"precision", m.precision},
        {"f_score", m.f_score},
        {"mcc", m.mcc},
        {"undefined", undefined},
        {"sensitivity_ci", sens_ci},
        {"auc_roc", roc.auc},
        {"auc_pr", pr.auc},
        {"auc_ci", {{"low", auc_ci.low}, {"high", auc_ci.high}, {"level", level}, {"n_boot", n_boot}}},
        {"roc", curve_json(roc, "fpr", "tpr")},
        {"pr", curve_json(pr, "recall", "precision")},
    };
    return j.dump(2);
}

void EvalReport::write_json(const std::filesystem::path& path) const { write_text(path, to_json() + "\n"); }

void EvalReport::write_curve_csv(const Curve& curve, const std::string& x_name, const std::string& y_name,
                                 const std::filesystem::path& path) {
    std::ostringstream os;
    os.precision(17);
    os << x_name << ',' << y_name << '\n';
    for (const auto& p : curve.points) os << p.x << ',' << p.y << '\n';
    write_text(path, os.str());
}

std::string EvalReport::curve_svg(const Curve& curve, const std::string& title, const std::string& x_name,
                                  const std::string& y_name, bool chance_diagonal) {
    constexpr double W = 420, H = 420, L = 60, T = 40, S = 320;
    auto px = [&](double x) { return fmt(L + x * S, 2); };
    auto py = [&](double y) { return fmt(T + (1 - y) * S, 2); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << S << "\" height=\"" << S
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        os << "<line x1=\"" << px(v) << "\" y1=\"" << T + S << "\" x2=\"" << px(v) << "\" y2=\"" << T + S + 5
           << "\" stroke=\"black\"/>";
        os << "<text x=\"" << px(v) << "\" y=\"" << T + S + 18 << "\" text-anchor=\"middle\">" << fmt(v, 1) << "</text>\n";
        os << "<line x1=\"" << L - 5 << "\" y1=\"" << py(v) << "\" x2=\"" << L << "\" y2=\"" << py(v)
           << "\" stroke=\"black\"/>";
        os << "<text x=\"" << L - 8 << "\" y=\"" << py(v) << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
           << fmt(v, 1) << "</text>\n";
    }
    os << "<text x=\"" << L + S / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_name << "</text>\n";
    os << "<text transform=\"translate(16," << T + S / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_name
       << "</text>\n";
    if (chance_diagonal) {
        os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
           << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"";
    for (const auto& p : curve.points) os << px(p.x) << ',' << py(p.y) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << L + S - 8 << "\" y=\"" << T + S - 12 << "\" text-anchor=\"end\">AUC = " << fmt(curve.auc)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

void EvalReport::write_all(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_json(dir / "report.json");
    write_curve_csv(roc, "fpr", "tpr", dir / "roc.csv");
    write_curve_csv(pr, "recall", "precision", dir / "pr.csv");
    write_text(dir / "roc.svg", curve_svg(roc, "ROC", "false positive rate", "true positive rate", true));
    write_text(dir / "pr.svg", curve_svg(pr, "Precision-recall", "recall", "precision", false));
}

std::string pca_svg(const PcaResult& pca, std::span<const int> labels, const std::string& title) {
    const std::size_t n = pca.projected.dim(0), k = pca.projected.dim(1);
    if (labels.size() != n) throw ArgumentError("PCA plot needs one label per point");
    double lo[2] = {0, 0}, hi[2] = {1, 1};
    for (std::size_t c = 0; c < 2 && c < k; ++c) {
        lo[c] = hi[c] = pca.projected[c];
        for (std::size_t i = 0; i < n; ++i) {
            lo[c] = std::min(lo[c], pca.projected[i * k + c]);
            hi[c] = std::max(hi[c], pca.projected[i * k + c]);
        }
        if (hi[c] == lo[c]) hi[c] = lo[c] + 1;
    }
    constexpr double L = 50, T = 40, S = 320;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"420\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"210\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << S << "\" height=\"" << S
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (pca.projected[i * k] - lo[0]) / (hi[0] - lo[0]);
        const double y = k > 1 ? (pca.projected[i * k + 1] - lo[1]) / (hi[1] - lo[1]) : 0.5;
        os << "<circle cx=\"" << fmt(L + x * S, 2) << "\" cy=\"" << fmt(T + (1 - y) * S, 2) << "\" r=\"2.5\" fill=\""
           << (labels[i] == 1 ? "#c0392b" : "#2471a3") << "\" fill-opacity=\"0.7\"/>\n";
    }
    auto pct = [&](std::size_t c) { return c < pca.explained_ratio.size() ? fmt(100 * pca.explained_ratio[c], 1) : "0"; };
    os << "<text x=\"" << L + S / 2 << "\" y=\"" << T + S + 30 << "\" text-anchor=\"middle\">PC1 (" << pct(0)
       << "%)</text>\n";
    os << "<text transform=\"translate(20," << T + S / 2 << ") rotate(-90)\" text-anchor=\"middle\">PC2 (" << pct(1)
       << "%)</text>\n";
    os << "<text x=\"" << L + 8 << "\" y=\"" << T + 16 << "\" fill=\"#c0392b\">positive</text>\n";
    os << "<text x=\"" << L + 8 << "\" y=\"" << T + 32 << "\" fill=\"#2471a3\">negative</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace stmre
