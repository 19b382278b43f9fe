#pragma once

// JSON instance files and manifest-headed CSV output for the command-line tool.

#include "json.hpp"
#include <string>
#include <utility>
#include <vector>

#include "secord/rdsolver.hpp"

namespace secord::cli {

using nlohmann::json;

Alphabet alphabet_from_json(const json& j);
Domain domain_from_json(const json& j);
// {"alphabet": ..., "values": [...]}; alphabet is one alphabet or a list
RealFunc realfunc_from_json(const json& j);
ProbVec probvec_from_json(const json& j);
// {"from": ..., "to": ..., "values": [...]} row-major; also accepts
// {"alphabet": {"from": ..., "to": ...}, "values": [...]}
CondKernel kernel_from_json(const json& j);
DetMap detmap_from_json(const json& j);

json to_json(const Alphabet& a);
json to_json(const RealFunc& f);
json to_json(const CondKernel& k);

// the variant's builder inputs, the generic joint form, or {"family": "wz_binary", ...}
CodingInstance instance_from_json(const json& j);
json instance_to_json(const CodingInstance& inst);  // generic joint form

json read_json_file(const std::string& path);

// 15 significant digits
std::string fmt_num(double v);

struct Manifest {
    std::string command;
    std::string arguments;
    std::string digest;
    std::uint64_t seed = 0;
};

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
    void add(const std::vector<double>& row);
    void add_text(const std::vector<std::string>& row);
    std::string body() const;
    void write(const std::string& path, const Manifest& m) const;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

struct ParsedCsv {
    std::vector<std::string> header_lines;  // '#' lines, verbatim
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};
ParsedCsv parse_csv(const std::string& text);
// fields that parse as numbers are re-emitted through fmt_num
std::string serialize_csv(const ParsedCsv& csv);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace secord::cli
