#include "cd3t/trainer/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cd3t/errors.hpp"

namespace cd3t::trainer {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

std::size_t MetricsTable::column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InputError("metrics has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

std::optional<double> MetricsTable::value(std::size_t row, const std::string& name) const {
    return rows.at(row).at(column_index(name));
}

MetricsTable read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open metrics file " + path.string());
    MetricsTable table;
    std::string line;
    if (!std::getline(in, line)) throw LoadError("metrics file is empty: " + path.string());
    table.columns = split(line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != table.columns.size()) {
            throw LoadError("metrics line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(table.columns.size()));
        }
        std::vector<std::optional<double>> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            if (c.empty()) {
                row.emplace_back();
                continue;
            }
            try {
                row.emplace_back(std::stod(c));
            } catch (const std::exception&) {
                throw LoadError("metrics line " + std::to_string(line_no) + ": bad number '" + c + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

TestCurve test_curve(const MetricsTable& table) {
    TestCurve curve;
    const auto t_col = table.column_index("t_total");
    const auto r_col = table.column_index("test_return_mean");
    for (const auto& row : table.rows) {
        if (row[r_col] && row[t_col]) {
            curve.t.push_back(*row[t_col]);
            curve.test_return.push_back(*row[r_col]);
        }
    }
    return curve;
}

}  // namespace cd3t::trainer
