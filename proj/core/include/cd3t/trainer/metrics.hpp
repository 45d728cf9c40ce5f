#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cd3t::trainer {

/// Parsed metrics.csv; empty cells are std::nullopt.
struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;

    /// Throws InputError for an unknown column.
    std::size_t column_index(const std::string& name) const;
    std::optional<double> value(std::size_t row, const std::string& name) const;
};

/// Throws LoadError when the file is missing or malformed.
MetricsTable read_metrics(const std::filesystem::path& path);

struct TestCurve {
    std::vector<double> t;
    std::vector<double> test_return;
};

/// Rows carrying test_return_mean, in file order.
TestCurve test_curve(const MetricsTable& table);

}  // namespace cd3t::trainer
