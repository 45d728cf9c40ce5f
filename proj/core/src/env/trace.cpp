#include "cd3t/env/trace.hpp"

#include <nlohmann/json.hpp>

#include "cd3t/errors.hpp"

namespace cd3t::env {

using nlohmann::json;

TraceWriter::TraceWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw InputError("cannot open trace file " + path.string());
}

void TraceWriter::write(const TraceRecord& record) {
    out_ << to_json_line(record) << '\n';
    out_.flush();
}

std::string to_json_line(const TraceRecord& record) {
    json j;
    j["t"] = record.t;
    j["state"] = record.state;
    j["actions"] = record.actions;
    j["subtasks"] = record.subtasks;
    j["reward"] = record.reward;
    j["done"] = record.done;
    return j.dump();
}

TraceRecord parse_trace_line(const std::string& line) {
    try {
        const json j = json::parse(line);
        TraceRecord r;
        r.t = j.at("t").get<int>();
        r.state = j.at("state").get<std::vector<float>>();
        r.actions = j.at("actions").get<std::vector<int>>();
        r.subtasks = j.at("subtasks").get<std::vector<int>>();
        r.reward = j.at("reward").get<double>();
        r.done = j.at("done").get<bool>();
        return r;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed trace line: ") + e.what());
    }
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open trace file " + path.string());
    std::vector<TraceRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) records.push_back(parse_trace_line(line));
    }
    return records;
}

}  // namespace cd3t::env
