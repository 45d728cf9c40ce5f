#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cd3t/env/trace.hpp"
#include "cd3t/subtask/subtask_set.hpp"
#include "cd3t/trainer/metrics.hpp"

namespace cd3t::plots {

/// Test-return curve aggregated over seeds at the timesteps every seed reports.
struct CurveBand {
    std::vector<double> t;
    std::vector<double> mean;
    std::vector<double> std;  ///< population std across seeds; zeros for a single seed
    int seeds = 0;
};

CurveBand aggregate_curves(const std::vector<trainer::TestCurve>& curves);

/// counts[t][j] = number of agents assigned subtask j at step t. Throws InputError on out-of-range ids.
std::vector<std::vector<int>> subtask_counts(const std::vector<env::TraceRecord>& trace, int clusters);

void plot_learning_curve(const CurveBand& band, const std::filesystem::path& path);
void plot_pca(const subtask::SubtaskSet& subtasks, const std::filesystem::path& path);
void plot_subtask_trace(const std::vector<std::vector<int>>& counts, const std::filesystem::path& path);
void plot_mask_sizes(const subtask::SubtaskSet& subtasks, const std::filesystem::path& path);

struct PlotReport {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> skipped;  ///< one message per plot whose inputs were missing
};

/// Learning curve over every run directory, the remaining plots from the first one.
PlotReport emit_plots(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace cd3t::plots
