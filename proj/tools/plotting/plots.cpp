#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cd3t/analysis/pca.hpp"
#include "cd3t/env/lbf.hpp"
#include "cd3t/errors.hpp"

namespace cd3t::plots {

namespace fs = std::filesystem;

namespace {

const std::vector<cv::Scalar> kPalette = {
    {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148}, {75, 86, 140}, {194, 119, 227},
};

cv::Scalar color(std::size_t i) { return kPalette[i % kPalette.size()]; }

std::string label(double v) {
    char buf[32];
    const double a = std::abs(v);
    if (a >= 1e4) {
        std::snprintf(buf, sizeof(buf), "%.0fk", v / 1000.0);
    } else if (a >= 10 || v == 0.0) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
    } else {
        std::snprintf(buf, sizeof(buf), "%.2f", v);
    }
    return buf;
}

/// Axes-and-data raster with a linear data-to-pixel map.
class Canvas {
public:
    Canvas(double x0, double x1, double y0, double y1, const std::string& title)
        : image_(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255)) {
        if (x1 <= x0) x1 = x0 + 1.0;
        if (y1 <= y0) y1 = y0 + 1.0;
        const double pad_y = 0.05 * (y1 - y0);
        x0_ = x0, x1_ = x1, y0_ = y0 - pad_y, y1_ = y1 + pad_y;
        cv::rectangle(image_, {kLeft, kTop}, {kWidth - kRight, kHeight - kBottom}, {0, 0, 0}, 1);
        for (int i = 0; i <= 4; ++i) {
            const double xv = x0_ + (x1_ - x0_) * i / 4.0;
            const double yv = y0_ + (y1_ - y0_) * i / 4.0;
            auto px = to_pixel(xv, y0_);
            auto py = to_pixel(x0_, yv);
            cv::line(image_, {px.x, kHeight - kBottom}, {px.x, kHeight - kBottom + 5}, {0, 0, 0}, 1);
            cv::line(image_, {kLeft - 5, py.y}, {kLeft, py.y}, {0, 0, 0}, 1);
            text(label(xv), {px.x - 15, kHeight - kBottom + 22}, {0, 0, 0});
            text(label(yv), {8, py.y + 5}, {0, 0, 0});
        }
        text(title, {kLeft, 28}, {0, 0, 0}, 0.65);
    }

    cv::Point to_pixel(double x, double y) const {
        const double fx = (x - x0_) / (x1_ - x0_);
        const double fy = (y - y0_) / (y1_ - y0_);
        return {kLeft + static_cast<int>(std::lround(fx * (kWidth - kLeft - kRight))),
                kHeight - kBottom - static_cast<int>(std::lround(fy * (kHeight - kTop - kBottom)))};
    }

    void polyline(const std::vector<double>& xs, const std::vector<double>& ys, const cv::Scalar& c) {
        std::vector<cv::Point> pts;
        for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back(to_pixel(xs[i], ys[i]));
        if (pts.size() == 1) cv::circle(image_, pts[0], 3, c, cv::FILLED, cv::LINE_AA);
        if (pts.size() >= 2) cv::polylines(image_, pts, false, c, 2, cv::LINE_AA);
    }

    void band(const std::vector<double>& xs, const std::vector<double>& lo, const std::vector<double>& hi,
              const cv::Scalar& c) {
        if (xs.size() < 2) return;
        std::vector<cv::Point> pts;
        for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back(to_pixel(xs[i], hi[i]));
        for (std::size_t i = xs.size(); i-- > 0;) pts.push_back(to_pixel(xs[i], lo[i]));
        cv::Mat overlay = image_.clone();
        cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{pts}, c);
        cv::addWeighted(overlay, 0.25, image_, 0.75, 0.0, image_);
    }

    void rect(double x0, double y0, double x1, double y1, const cv::Scalar& c) {
        cv::rectangle(image_, to_pixel(x0, y0), to_pixel(x1, y1), c, cv::FILLED);
    }

    void point(double x, double y, const cv::Scalar& c) { cv::circle(image_, to_pixel(x, y), 7, c, cv::FILLED, cv::LINE_AA); }

    void text(const std::string& s, cv::Point at, const cv::Scalar& c, double scale = 0.45) {
        cv::putText(image_, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, c, 1, cv::LINE_AA);
    }

    void legend(std::size_t row, const std::string& s, const cv::Scalar& c) {
        const cv::Point at{kWidth - kRight - 170, kTop + 18 + static_cast<int>(row) * 20};
        cv::rectangle(image_, at + cv::Point(0, -10), at + cv::Point(14, 2), c, cv::FILLED);
        text(s, at + cv::Point(20, 0), {0, 0, 0});
    }

    void axis_labels(const std::string& x, const std::string& y) {
        text(x, {kWidth / 2 - 40, kHeight - 12}, {0, 0, 0}, 0.5);
        text(y, {kLeft + 6, kTop + 16}, {90, 90, 90}, 0.45);
    }

    void save(const fs::path& path) const {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        if (!cv::imwrite(path.string(), image_, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
            throw InputError("cannot write image " + path.string());
        }
    }

private:
    static constexpr int kWidth = 800;
    static constexpr int kHeight = 500;
    static constexpr int kLeft = 70;
    static constexpr int kRight = 20;
    static constexpr int kTop = 45;
    static constexpr int kBottom = 55;
    cv::Mat image_;
    double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
};

}  // namespace

CurveBand aggregate_curves(const std::vector<trainer::TestCurve>& curves) {
    CurveBand band;
    band.seeds = static_cast<int>(curves.size());
    if (curves.empty()) return band;
    std::map<double, std::vector<double>> by_t;
    for (const auto& curve : curves) {
        std::set<double> seen;
        for (std::size_t i = 0; i < curve.t.size(); ++i) {
            if (seen.insert(curve.t[i]).second) by_t[curve.t[i]].push_back(curve.test_return[i]);
        }
    }
    for (const auto& [t, values] : by_t) {
        if (values.size() != curves.size()) continue;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        band.t.push_back(t);
        band.mean.push_back(mean);
        band.std.push_back(std::sqrt(var / static_cast<double>(values.size())));
    }
    return band;
}

std::vector<std::vector<int>> subtask_counts(const std::vector<env::TraceRecord>& trace, int clusters) {
    std::vector<std::vector<int>> counts;
    counts.reserve(trace.size());
    for (const auto& record : trace) {
        std::vector<int> row(static_cast<std::size_t>(clusters), 0);
        for (int s : record.subtasks) {
            if (s < 0 || s >= clusters) throw InputError("trace subtask id " + std::to_string(s) + " out of range");
            ++row[static_cast<std::size_t>(s)];
        }
        counts.push_back(std::move(row));
    }
    return counts;
}

void plot_learning_curve(const CurveBand& band, const fs::path& path) {
    if (band.t.empty()) throw InputError("learning curve has no test points");
    std::vector<double> lo, hi;
    for (std::size_t i = 0; i < band.t.size(); ++i) {
        lo.push_back(band.mean[i] - band.std[i]);
        hi.push_back(band.mean[i] + band.std[i]);
    }
    const double y0 = std::min(0.0, *std::min_element(lo.begin(), lo.end()));
    const double y1 = std::max(1.0, *std::max_element(hi.begin(), hi.end()));
    Canvas canvas(band.t.front(), band.t.back(), y0, y1,
                  "Test return (" + std::to_string(band.seeds) + (band.seeds == 1 ? " seed)" : " seeds, mean +/- std)"));
    if (band.seeds > 1) canvas.band(band.t, lo, hi, color(0));
    canvas.polyline(band.t, band.mean, color(0));
    canvas.axis_labels("environment steps", "return");
    canvas.save(path);
}

void plot_pca(const subtask::SubtaskSet& subtasks, const fs::path& path) {
    const auto projection = analysis::pca_project(subtasks.action_representations, 2);
    const auto& xy = projection.coordinates;
    const double xr = std::max(xy.col(0).cwiseAbs().maxCoeff(), 1e-6) * 1.2;
    const double yr = std::max(xy.col(1).cwiseAbs().maxCoeff(), 1e-6) * 1.2;
    Canvas canvas(-xr, xr, -yr, yr, "Action representations (PCA), colored by subtask");
    for (Eigen::Index a = 0; a < xy.rows(); ++a) {
        const auto subtask = static_cast<std::size_t>(subtasks.action_to_subtask[static_cast<std::size_t>(a)]);
        canvas.point(xy(a, 0), xy(a, 1), color(subtask));
        canvas.text(std::string(env::action_name(static_cast<int>(a))), canvas.to_pixel(xy(a, 0), xy(a, 1)) + cv::Point(9, -6),
                    {0, 0, 0});
    }
    for (int j = 0; j < subtasks.clusters; ++j) canvas.legend(static_cast<std::size_t>(j), "subtask " + std::to_string(j), color(static_cast<std::size_t>(j)));
    canvas.axis_labels("PC1", "PC2");
    canvas.save(path);
}

void plot_subtask_trace(const std::vector<std::vector<int>>& counts, const fs::path& path) {
    if (counts.empty() || counts.front().empty()) throw InputError("subtask trace is empty");
    const auto clusters = counts.front().size();
    int n_agents = 0;
    for (int c : counts.front()) n_agents += c;
    Canvas canvas(0.0, static_cast<double>(counts.size() - 1), 0.0, static_cast<double>(n_agents),
                  "Agents per subtask over an evaluation episode");
    std::vector<double> ts(counts.size());
    for (std::size_t t = 0; t < counts.size(); ++t) ts[t] = static_cast<double>(t);
    for (std::size_t j = 0; j < clusters; ++j) {
        std::vector<double> ys;
        for (const auto& row : counts) ys.push_back(row.at(j));
        canvas.polyline(ts, ys, color(j));
        canvas.legend(j, "subtask " + std::to_string(j), color(j));
    }
    canvas.axis_labels("step", "agents");
    canvas.save(path);
}

void plot_mask_sizes(const subtask::SubtaskSet& subtasks, const fs::path& path) {
    Canvas canvas(-0.5, subtasks.clusters - 0.5, 0.0, static_cast<double>(subtasks.n_actions()),
                  "Executable actions per subtask (of " + std::to_string(subtasks.n_actions()) + ")");
    for (int j = 0; j < subtasks.clusters; ++j) {
        canvas.rect(j - 0.3, 0.0, j + 0.3, subtasks.mask_size(j), color(static_cast<std::size_t>(j)));
        std::string members;
        for (int a : subtasks.member_actions(j)) members += (members.empty() ? "" : ",") + std::string(env::action_name(a));
        canvas.text(members, canvas.to_pixel(j - 0.3, subtasks.mask_size(j)) + cv::Point(0, -6), {0, 0, 0}, 0.4);
    }
    canvas.axis_labels("subtask", "mask size");
    canvas.save(path);
}

PlotReport emit_plots(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    PlotReport report;
    if (run_dirs.empty()) throw InputError("no run directory given");
    auto attempt = [&](const std::string& name, auto&& body) {
        try {
            const auto path = out_dir / name;
            body(path);
            report.written.push_back(path);
        } catch (const std::exception& e) {
            report.skipped.push_back(name + ": skipped (" + e.what() + ")");
        }
    };

    attempt("learning_curve.png", [&](const fs::path& path) {
        std::vector<trainer::TestCurve> curves;
        for (const auto& dir : run_dirs) curves.push_back(trainer::test_curve(trainer::read_metrics(dir / "metrics.csv")));
        plot_learning_curve(aggregate_curves(curves), path);
    });

    const auto decomposition_path = run_dirs.front() / "decomposition.json";
    attempt("pca.png", [&](const fs::path& path) { plot_pca(subtask::read_decomposition(decomposition_path), path); });
    attempt("subtask_trace.png", [&](const fs::path& path) {
        const auto subtasks = subtask::read_decomposition(decomposition_path);
        const auto trace_path = run_dirs.front() / "traces" / "episode_0.jsonl";
        if (!fs::exists(trace_path)) throw LoadError("missing " + trace_path.string());
        plot_subtask_trace(subtask_counts(env::read_trace(trace_path), subtasks.clusters), path);
    });
    attempt("mask_sizes.png", [&](const fs::path& path) { plot_mask_sizes(subtask::read_decomposition(decomposition_path), path); });
    return report;
}

}  // namespace cd3t::plots
