#include "cli_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace secord::cli {

namespace {

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) fail(ErrorKind::InvalidInput, std::string("missing field \"") + key + "\"");
    return j.at(key);
}

double number(const json& j, const char* key) {
    const json& v = field(j, key);
    require(v.is_number(), ErrorKind::InvalidInput, std::string("field \"") + key + "\" must be a number");
    return v.get<double>();
}

std::vector<double> numbers(const json& j) {
    require(j.is_array(), ErrorKind::InvalidInput, "values must be an array");
    std::vector<double> v;
    for (const auto& x : j) {
        require(x.is_number(), ErrorKind::InvalidInput, "values must be numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

std::vector<double> scalar_or_list(const json& j) {
    if (j.is_number()) return {j.get<double>()};
    return numbers(j);
}

std::vector<std::string> names(const json& j) {
    std::vector<std::string> out;
    if (j.is_null()) return out;
    require(j.is_array(), ErrorKind::InvalidInput, "variable lists must be arrays");
    for (const auto& s : j) out.push_back(s.get<std::string>());
    return out;
}

}  // namespace

Alphabet alphabet_from_json(const json& j) {
    require(j.is_object(), ErrorKind::InvalidInput, "alphabet must be an object {name, symbols}");
    std::string name = field(j, "name").get<std::string>();
    const json& s = field(j, "symbols");
    if (s.is_number_integer()) return Alphabet::range(name, s.get<std::size_t>());
    std::vector<std::string> syms;
    for (const auto& x : s) syms.push_back(x.is_string() ? x.get<std::string>() : x.dump());
    return Alphabet(name, syms);
}

Domain domain_from_json(const json& j) {
    Domain d;
    if (j.is_array()) {
        for (const auto& a : j) d.push_back(alphabet_from_json(a));
    } else {
        d.push_back(alphabet_from_json(j));
    }
    return d;
}

RealFunc realfunc_from_json(const json& j) {
    return RealFunc(domain_from_json(field(j, "alphabet")), numbers(field(j, "values")));
}

ProbVec probvec_from_json(const json& j) {
    bool renorm = j.contains("renormalize") && j.at("renormalize").get<bool>();
    return ProbVec(realfunc_from_json(j), renorm);
}

CondKernel kernel_from_json(const json& j) {
    const json& a = j.contains("alphabet") ? j.at("alphabet") : j;
    bool renorm = j.contains("renormalize") && j.at("renormalize").get<bool>();
    return CondKernel(domain_from_json(field(a, "from")), domain_from_json(field(a, "to")), numbers(field(j, "values")),
                      renorm);
}

DetMap detmap_from_json(const json& j) {
    DetMap m;
    m.from = domain_from_json(field(j, "from"));
    m.to = alphabet_from_json(field(j, "to"));
    for (const auto& v : field(j, "image")) m.image.push_back(v.get<std::size_t>());
    return m;
}

json to_json(const Alphabet& a) { return json{{"name", a.name}, {"symbols", a.symbols}}; }

json to_json(const RealFunc& f) {
    json d = json::array();
    for (const auto& a : f.domain()) d.push_back(to_json(a));
    return json{{"alphabet", d}, {"values", f.values()}};
}

json to_json(const CondKernel& k) {
    json from = json::array(), to = json::array();
    for (const auto& a : k.from()) from.push_back(to_json(a));
    for (const auto& a : k.to()) to.push_back(to_json(a));
    return json{{"from", from}, {"to", to}, {"values", k.func().values()}};
}

CodingInstance instance_from_json(const json& j) {
    require(j.is_object(), ErrorKind::InvalidInput, "instance must be a JSON object");
    if (j.contains("family")) {
        const std::string fam = j.at("family").get<std::string>();
        require(fam == "wz_binary", ErrorKind::InvalidInput, "unknown family " + fam);
        const double p = number(j, "p");
        if (j.contains("beta")) {
            double lam = j.contains("lambda") ? number(j, "lambda") : 0.0;
            return wz_binary_family(p, number(j, "beta"), number(j, "gamma"), lam).inst;
        }
        WZBinaryOpt o = wz_binary_optimize(p, number(j, "D"));
        CodingInstance in = wz_binary_family(p, o.beta, o.gamma, o.lambda).inst;
        return in;
    }
    const Variant v = parse_variant(field(j, "variant").get<std::string>());
    if (j.contains("joint")) {
        CodingInstance in;
        in.variant = v;
        in.joint = probvec_from_json(j.at("joint"));
        in.enc = names(j.value("enc", json()));
        in.aux = names(j.value("aux", json()));
        in.side = names(j.value("side", json()));
        const json& d = field(j, "d");
        if (d.is_array())
            for (const auto& f : d) in.d.push_back(realfunc_from_json(f));
        else
            in.d.push_back(realfunc_from_json(d));
        in.D = scalar_or_list(field(j, "D"));
        in.lambda = scalar_or_list(field(j, "lambda"));
        validate_instance(in);
        return in;
    }
    const double D = number(j, "D"), lam = number(j, "lambda");
    switch (v) {
        case Variant::LossySC:
            return make_lossy_sc(probvec_from_json(field(j, "source")), kernel_from_json(field(j, "test_channel")),
                                 realfunc_from_json(field(j, "distortion")), D, lam);
        case Variant::WynerZiv:
            return make_wyner_ziv(probvec_from_json(field(j, "source")), kernel_from_json(field(j, "side")),
                                  kernel_from_json(field(j, "aux")), detmap_from_json(field(j, "z")),
                                  realfunc_from_json(field(j, "distortion")), D, lam);
        case Variant::IndirectWZ:
            return make_indirect_wz(probvec_from_json(field(j, "source")), kernel_from_json(field(j, "side")),
                                    kernel_from_json(field(j, "aux")), detmap_from_json(field(j, "z")),
                                    realfunc_from_json(field(j, "distortion")), D, lam);
        case Variant::ChannelCost:
            return make_channel_cost(probvec_from_json(field(j, "input")), kernel_from_json(field(j, "channel")),
                                     realfunc_from_json(field(j, "cost")), D, lam);
        case Variant::GelfandPinsker:
            return make_gelfand_pinsker(probvec_from_json(field(j, "state")), kernel_from_json(field(j, "aux")),
                                        detmap_from_json(field(j, "xmap")), kernel_from_json(field(j, "channel")),
                                        realfunc_from_json(field(j, "cost")), D, lam);
        default:
            fail(ErrorKind::Unsupported, variant_name(v) + " instances are given in the joint form");
    }
}

json instance_to_json(const CodingInstance& inst) {
    json d = json::array();
    for (const auto& f : inst.d) d.push_back(to_json(f));
    return json{{"variant", variant_name(inst.variant)},
                {"joint", to_json(inst.joint.func())},
                {"enc", inst.enc},
                {"aux", inst.aux},
                {"side", inst.side},
                {"d", d},
                {"D", inst.D},
                {"lambda", inst.lambda}};
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::InvalidInput, "cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::InvalidInput, "cannot write " + path);
    f << text;
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidInput, path + ": " + e.what());
    }
}

std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;  // no negative zero
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

void CsvTable::add(const std::vector<double>& row) {
    std::vector<std::string> r;
    for (double v : row) r.push_back(fmt_num(v));
    add_text(r);
}

void CsvTable::add_text(const std::vector<std::string>& row) {
    require(row.size() == columns_.size(), ErrorKind::Shape, "row width differs from the header");
    rows_.push_back(row);
}

std::string CsvTable::body() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
        s += '\n';
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    return s;
}

void CsvTable::write(const std::string& path, const Manifest& m) const {
    char ts[32];
    std::time_t now = std::time(nullptr);
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    std::string h;
    h += "# command: " + m.command + "\n";
    h += "# arguments: " + m.arguments + "\n";
    h += "# instance_digest: " + (m.digest.empty() ? std::string("none") : m.digest) + "\n";
    h += "# seed: " + std::to_string(m.seed) + "\n";
    h += "# version: " SECORD_VERSION "\n";
    h += std::string("# timestamp: ") + ts + "\n";
    write_file(path, h + body());
}

ParsedCsv parse_csv(const std::string& text) {
    ParsedCsv out;
    std::istringstream is(text);
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (!header && !line.empty() && line[0] == '#') {
            out.header_lines.push_back(line);
            continue;
        }
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (!header) {
            out.columns = f;
            header = true;
        } else {
            require(f.size() == out.columns.size(), ErrorKind::Shape, "ragged CSV row");
            out.rows.push_back(f);
        }
    }
    return out;
}

std::string serialize_csv(const ParsedCsv& csv) {
    std::string s;
    for (const auto& h : csv.header_lines) s += h + "\n";
    auto line = [&](const std::vector<std::string>& r, bool numeric) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            std::string c = r[i];
            if (numeric) {
                char* end = nullptr;
                double v = std::strtod(c.c_str(), &end);
                if (!c.empty() && end == c.c_str() + c.size()) c = fmt_num(v);
            }
            s += (i ? "," : "") + c;
        }
        s += '\n';
    };
    line(csv.columns, false);
    for (const auto& r : csv.rows) line(r, true);
    return s;
}

}  // namespace secord::cli
