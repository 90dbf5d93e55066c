#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deferlab/rng.hpp"

namespace deferlab {

using FeatureVector = std::vector<double>;

struct LabeledPoint {
    FeatureVector x;
    int y = 0;
};

/// A point carrying both the truth and one human's answer. `imputed` marks
/// answers synthesized from a human performance model rather than observed.
struct HumanAnnotatedPoint {
    FeatureVector x;
    int y = 0;
    int h = 0;
    bool imputed = false;

    bool human_correct() const noexcept { return h == y; }
};

/// Aggregate pool, the specific individual's annotations (fine-tune / test
/// halves) and truth-only points used for imputation.
struct DeferDataset {
    std::vector<HumanAnnotatedPoint> aggregate;
    std::vector<HumanAnnotatedPoint> specific_finetune;
    std::vector<HumanAnnotatedPoint> specific_test;
    std::vector<LabeledPoint> unlabeled;
    int num_classes = 0;
};

/// Perfect on classes [0, k), uniform guess over all classes elsewhere.
struct SyntheticExpert {
    int k = 0;
    int num_classes = 10;
    std::uint64_t seed = 0;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void check_expert(const SyntheticExpert& e) {
    if (e.num_classes < 1 || e.k < 0 || e.k > e.num_classes)
        throw std::invalid_argument("synthetic expert needs 0 <= k <= K");
}

/// One expert answer. Consumes one draw from `rng` only when guessing, so
/// the output is a pure function of (seed, call order).
inline int expert_label(const SyntheticExpert& expert, const LabeledPoint& point, Rng& rng) {
    check_expert(expert);
    if (point.y < 0 || point.y >= expert.num_classes)
        throw std::invalid_argument("point label out of range for expert");
    if (point.y < expert.k) return point.y;
    std::uniform_int_distribution<int> guess(0, expert.num_classes - 1);
    return guess(rng);
}

/// Annotate a batch with a fresh stream seeded from `expert.seed`.
inline std::vector<HumanAnnotatedPoint> annotate(const SyntheticExpert& expert,
                                                 std::span<const LabeledPoint> points) {
    Rng rng = make_rng(expert.seed, {stream::expert});
    std::vector<HumanAnnotatedPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p.x, p.y, expert_label(expert, p, rng), false});
    return out;
}

/// Expected accuracy of a k-expert over uniformly distributed classes.
constexpr double expert_expected_accuracy(int k, int num_classes) noexcept {
    const double frac = static_cast<double>(k) / num_classes;
    return frac + (1.0 - frac) / num_classes;
}

struct BlobSpec {
    int num_classes = 10;
    int dim = 16;
    int n_per_class = 600;
    double spread = 1.0;
    double separation = 6.0;  // pairwise distance between class means
    std::uint64_t seed = 0;
};

/// Class means. For dim >= K the means sit on scaled basis vectors so every
/// pair is exactly `separation` apart; otherwise they are spread on a sphere.
inline std::vector<FeatureVector> blob_means(const BlobSpec& spec) {
    std::vector<FeatureVector> means(spec.num_classes, FeatureVector(spec.dim, 0.0));
    const double radius = spec.separation / std::sqrt(2.0);
    if (spec.dim >= spec.num_classes) {
        for (int c = 0; c < spec.num_classes; ++c) means[c][c] = radius;
        return means;
    }
    Rng rng = make_rng(spec.seed, {stream::blobs, 0});
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& m : means) {
        double norm = 0.0;
        for (auto& v : m) {
            v = n01(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : m) v *= radius / norm;
    }
    return means;
}

inline std::vector<LabeledPoint> generate_blob_dataset(const BlobSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("blob dataset needs K >= 2");
    if (spec.dim < 2) throw std::invalid_argument("blob dataset needs d >= 2");
    if (spec.n_per_class < 1) throw std::invalid_argument("blob dataset needs n_per_class >= 1");
    if (!(spec.spread > 0.0)) throw std::invalid_argument("blob spread must be positive");

    const auto means = blob_means(spec);
    Rng rng = make_rng(spec.seed, {stream::blobs, 1});
    std::normal_distribution<double> noise(0.0, spec.spread);
    std::vector<LabeledPoint> out;
    out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.n_per_class);
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int i = 0; i < spec.n_per_class; ++i) {
            FeatureVector x(means[c]);
            for (auto& v : x) v += noise(rng);
            out.push_back({std::move(x), c});
        }
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Shuffled halves; the odd point goes to the fine-tune side.
template <typename Point>
std::pair<std::vector<Point>, std::vector<Point>> split_specific(std::span<const Point> points,
                                                                 std::uint64_t seed) {
    if (points.empty()) throw std::invalid_argument("cannot split an empty specific set");
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, {stream::split});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_ft = (points.size() + 1) / 2;
    std::pair<std::vector<Point>, std::vector<Point>> out;
    out.first.reserve(n_ft);
    out.second.reserve(points.size() - n_ft);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_ft ? out.first : out.second).push_back(points[order[i]]);
    return out;
}

inline std::pair<std::vector<HumanAnnotatedPoint>, std::vector<HumanAnnotatedPoint>>
split_specific(const std::vector<HumanAnnotatedPoint>& points, std::uint64_t seed) {
    return split_specific<HumanAnnotatedPoint>(std::span<const HumanAnnotatedPoint>(points), seed);
}

/// weight_c = N / (K_present * count_c); absent classes get 0. The
/// count-weighted mean of the result is exactly 1.
inline std::vector<double> inverse_frequency_weights(std::span<const int> labels, int num_classes) {
    if (labels.empty()) throw std::invalid_argument("inverse_frequency_weights: empty label list");
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::invalid_argument("inverse_frequency_weights: label out of range");
        ++counts[y];
    }
    const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
    const double n = static_cast<double>(labels.size());
    std::vector<double> w(num_classes, 0.0);
    for (int c = 0; c < num_classes; ++c)
        if (counts[c] > 0) w[c] = n / (static_cast<double>(present) * static_cast<double>(counts[c]));
    return w;
}

// ---------------------------------------------------------------------------
// Annotation CSV: feat_0,...,feat_{d-1},true_label,human_label[,imputed]

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline std::vector<HumanAnnotatedPoint> read_annotations(std::istream& in, int num_classes,
                                                         const std::string& source = "<stream>") {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw DataError(source + ":" + std::to_string(lineno) + ": " + msg);
    };

    std::size_t dim = 0;
    bool has_imputed = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::trim(line).empty()) break;
    }
    if (detail::trim(line).empty()) fail("missing header");
    {
        auto cols = detail::split_csv(detail::trim(line));
        if (!cols.empty() && detail::trim(cols.back()) == "imputed") {
            has_imputed = true;
            cols.pop_back();
        }
        if (cols.size() < 2 || detail::trim(cols[cols.size() - 2]) != "true_label" ||
            detail::trim(cols.back()) != "human_label")
            fail("header must end with true_label,human_label");
        dim = cols.size() - 2;
        for (std::size_t j = 0; j < dim; ++j)
            if (detail::trim(cols[j]) != "feat_" + std::to_string(j))
                fail("expected column feat_" + std::to_string(j));
    }

    std::vector<HumanAnnotatedPoint> out;
    const std::size_t ncols = dim + 2 + (has_imputed ? 1 : 0);
    while (std::getline(in, line)) {
        ++lineno;
        auto body = detail::trim(line);
        if (body.empty()) continue;
        auto cols = detail::split_csv(body);
        if (cols.size() != ncols)
            fail("expected " + std::to_string(ncols) + " fields, found " + std::to_string(cols.size()));
        HumanAnnotatedPoint p;
        p.x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            if (!detail::parse_number(cols[j], p.x[j]) || !std::isfinite(p.x[j]))
                fail("bad feature value in column " + std::to_string(j));
        }
        if (!detail::parse_number(cols[dim], p.y) || !detail::parse_number(cols[dim + 1], p.h))
            fail("labels must be integers");
        if (p.y < 0 || p.y >= num_classes) fail("true_label " + std::to_string(p.y) + " out of range");
        if (p.h < 0 || p.h >= num_classes) fail("human_label " + std::to_string(p.h) + " out of range");
        if (has_imputed) {
            int flag = 0;
            if (!detail::parse_number(cols[dim + 2], flag) || (flag != 0 && flag != 1))
                fail("imputed must be 0 or 1");
            p.imputed = flag == 1;
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<HumanAnnotatedPoint> load_annotations(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file: " + path);
    return read_annotations(in, num_classes, path);
}

inline void write_annotations(std::ostream& out, std::span<const HumanAnnotatedPoint> points,
                              bool with_imputed = false) {
    const std::size_t dim = points.empty() ? 0 : points.front().x.size();
    for (std::size_t j = 0; j < dim; ++j) out << "feat_" << j << ',';
    out << "true_label,human_label";
    if (with_imputed) out << ",imputed";
    out << '\n';
    for (const auto& p : points) {
        if (p.x.size() != dim) throw DataError("inconsistent feature dimension in export");
        for (double v : p.x) out << detail::format_double(v) << ',';
        out << p.y << ',' << p.h;
        if (with_imputed) out << ',' << (p.imputed ? 1 : 0);
        out << '\n';
    }
}

inline void save_annotations(const std::string& path, std::span<const HumanAnnotatedPoint> points,
                             bool with_imputed = false) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write annotation file: " + path);
    write_annotations(out, points, with_imputed);
}

}  // namespace deferlab
