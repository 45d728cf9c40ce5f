#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace cd3t::env {

/// One environment transition as written to an episode trace.
struct TraceRecord {
    int t = 0;
    std::vector<float> state;
    std::vector<int> actions;
    /// -1 for agents without an assigned subtask (before decomposition).
    std::vector<int> subtasks;
    double reward = 0.0;
    bool done = false;
};

/// Line-delimited JSON, one object per step.
class TraceWriter {
public:
    explicit TraceWriter(const std::filesystem::path& path);

    void write(const TraceRecord& record);

private:
    std::ofstream out_;
};

std::string to_json_line(const TraceRecord& record);
TraceRecord parse_trace_line(const std::string& line);
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

}  // namespace cd3t::env
