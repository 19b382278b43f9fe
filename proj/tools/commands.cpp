#include "commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "cli_io.hpp"
#include "secord/bounds.hpp"
#include "secord/simlab.hpp"

namespace secord::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
    std::string instance;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::uint64_t trials = 0;
    std::string grid;
    bool trace = false;
    std::string args;
};

// "a:b:k" is k points from a to b inclusive; otherwise a comma list
std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> out;
    auto num = [&](const std::string& s) {
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        require(!s.empty() && end == s.c_str() + s.size(), ErrorKind::InvalidInput, "bad grid value '" + s + "'");
        return v;
    };
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        std::string p;
        while (std::getline(ss, p, ':')) parts.push_back(p);
        require(parts.size() == 3, ErrorKind::InvalidInput, "grid range must be start:stop:count");
        double a = num(parts[0]), b = num(parts[1]);
        long k = static_cast<long>(num(parts[2]));
        require(k >= 1, ErrorKind::InvalidInput, "grid count must be positive");
        for (long i = 0; i < k; ++i) out.push_back(k == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(k - 1));
        return out;
    }
    std::stringstream ss(spec);
    std::string p;
    while (std::getline(ss, p, ',')) out.push_back(num(p));
    require(!out.empty(), ErrorKind::InvalidInput, "empty grid");
    return out;
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

Manifest manifest(const Common& c, const std::string& cmd, const std::string& digest) {
    return {cmd, c.args, digest, c.seed};
}

CodingInstance load_instance(const Common& c) {
    require(!c.instance.empty(), ErrorKind::InvalidInput, "--instance is required");
    return instance_from_json(read_json_file(c.instance));
}

void add_common(CLI::App* sub, Common& c, bool instance = true) {
    if (instance) sub->add_option("--instance", c.instance, "instance JSON file");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--trials", c.trials, "Monte-Carlo trials");
    sub->add_option("--grid", c.grid, "grid: start:stop:count or a comma list");
    sub->add_flag("--trace", c.trace, "write per-trial logs");
}

int cmd_rd(const Common& c) {
    json j = read_json_file(c.instance);
    ProbVec px = probvec_from_json(j.at("source"));
    RealFunc d = realfunc_from_json(j.at("distortion"));
    std::vector<double> grid = parse_grid(c.grid.empty() ? (j.contains("D") ? fmt_num(j.at("D").get<double>()) : "0.01:0.49:49")
                                                         : c.grid);
    CsvTable t({"D", "R", "lambda", "V"});
    for (double D : grid) {
        LSCDispersion s = lsc_dispersion(px, d, D);
        t.add({D, s.rate, s.lambda, s.V});
    }
    t.write(out_path(c, "rd.csv"), manifest(c, "rd", ""));
    return 0;
}

std::string gnuplot_script(const std::string& csv, double p) {
    std::string s;
    s += "set datafile separator ','\n";
    s += "set key autotitle columnhead\n";
    s += "set xlabel 'D'\nset ylabel 'dispersion'\n";
    s += "set title 'binary Hamming, p = " + fmt_num(p) + "'\n";
    s += "plot '" + csv + "' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines, '' using 1:5 with lines\n";
    return s;
}

int cmd_figure3(const Common& c, const std::string& p_list) {
    std::vector<double> ps = parse_grid(p_list);
    std::vector<double> fractions;
    if (c.grid.empty() || c.grid.find_first_of(":,.") == std::string::npos) {
        long k = c.grid.empty() ? 40 : std::stol(c.grid);
        require(k >= 1, ErrorKind::InvalidInput, "grid count must be positive");
        for (long i = 1; i <= k; ++i) fractions.push_back(static_cast<double>(i) / static_cast<double>(k + 1));
    } else {
        fractions = parse_grid(c.grid);  // fractions of p
    }
    int status = 0;
    for (double p : ps) {
        require(p > 0.0 && p < 0.5, ErrorKind::Domain, "p must lie in (0, 1/2)");
        CsvTable t({"D", "V_GCC", "V_VYAG", "V_WKT", "V_LA"});
        for (double f : fractions) {
            Figure3Point r = figure3_point(p, f * p);
            if (!r.ok) std::cerr << "figure3: p=" << fmt_num(p) << " D=" << fmt_num(r.D) << " flagged: " << r.note << "\n";
            else if (!(r.v_gcc <= r.v_la + 1e-9 && r.v_la <= r.v_vyag + 1e-9 && r.v_wkt <= r.v_vyag + 1e-9)) {
                std::cerr << "figure3: ordering violated at p=" << fmt_num(p) << " D=" << fmt_num(r.D) << "\n";
                status = 1;
            }
            t.add({r.D, r.v_gcc, r.v_vyag, r.v_wkt, r.v_la});
        }
        const std::string name = "fig3_p" + fmt_num(p);
        t.write(out_path(c, name + ".csv"), manifest(c, "figure3", ""));
        write_file(out_path(c, name + ".gp"), gnuplot_script(name + ".csv", p));
    }
    return status;
}

int cmd_bound(const Common& c, long n, double eps) {
    CodingInstance inst = load_instance(c);
    BoundReport r = bound_report(inst, n, eps);
    CsvTable t({"quantity", "value"});
    t.add_text({r.bound_name, fmt_num(r.value)});
    for (const auto& [k, v] : r.intermediates) t.add_text({k, fmt_num(v)});
    t.write(out_path(c, "bound.csv"), manifest(c, "bound", r.digest));
    return 0;
}

int cmd_simulate(const Common& c, long n, double rate, bool no_slack, double delta, bool tail, bool serial) {
    SimConfig cfg;
    cfg.instance = load_instance(c);
    cfg.scheme = scheme_of(cfg.instance.variant);
    cfg.n = n;
    cfg.rate = rate;
    cfg.trials = c.trials ? c.trials : 1000;
    cfg.seed = c.seed;
    cfg.delta_slack = !no_slack;
    cfg.delta = delta;
    cfg.tail_repair = tail;
    cfg.parallel = !serial;
    cfg.trace = c.trace;
    SimResult r = simulate(cfg);
    const std::string digest = instance_digest(cfg.instance);
    CsvTable t({"quantity", "value"});
    auto row = [&](const std::string& k, double v) { t.add_text({k, fmt_num(v)}); };
    row("trials", static_cast<double>(r.trials));
    row("errors", static_cast<double>(r.errors));
    row("infeasible", static_cast<double>(r.infeasible));
    row("error_rate", r.error_rate());
    row("wilson_lo", r.wilson.lo);
    row("wilson_hi", r.wilson.hi);
    row("pml_bound", r.pml_bound);
    row("pml_bound_se", r.pml_bound_se);
    row("messages", static_cast<double>(r.messages));
    row("codewords", static_cast<double>(r.codewords));
    row("tail_symbols", r.tail_symbols);
    row("empirical_rate_used", r.empirical_rate_used);
    row("threshold", r.threshold);
    t.write(out_path(c, "simulate.csv"), manifest(c, "simulate", digest));
    if (c.trace) {
        CsvTable tr({"trial", "infeasible", "error", "replaced", "log_p_enc", "log_p_dec", "log_p_marg", "distortion",
                     "bound"});
        for (const auto& l : r.log)
            tr.add({static_cast<double>(l.trial), double(l.infeasible), double(l.error), double(l.replaced), l.log_p_enc,
                    l.log_p_dec, l.log_p_marg, l.distortion, l.bound});
        tr.write(out_path(c, "trace.csv"), manifest(c, "simulate", digest));
    }
    std::cout << "errors " << r.errors << " / " << r.trials << "  (bound " << fmt_num(r.pml_bound) << ")\n";
    return 0;
}

int cmd_typedev(const Common& c, const std::string& pmf) {
    ProbVec src;
    if (!c.instance.empty()) {
        src = probvec_from_json(read_json_file(c.instance).at("source"));
    } else {
        std::vector<double> p = parse_grid(pmf);
        src = make_pmf(Alphabet::range("X", p.size()), p);
    }
    std::vector<long> ns;
    for (double v : parse_grid(c.grid.empty() ? "100,1000,10000" : c.grid)) ns.push_back(static_cast<long>(v));
    const std::size_t trials = c.trials ? c.trials : 2000;
    TypeDeviationOptions opt;
    opt.keep_samples = c.trace;
    auto rows = type_deviation_stats(src, ns, trials, c.seed, opt);
    CsvTable t({"n", "lp_estimate", "scaled", "bootstrap_radius"});
    for (const auto& r : rows) t.add({static_cast<double>(r.n), r.lp_estimate, r.scaled, r.bootstrap_radius});
    t.write(out_path(c, "typedev.csv"), manifest(c, "typedev", ""));
    CsvTable s({"n", "q95_type_class", "q95_mixture", "q95_iid"});
    for (long n : ns) {
        double a = self_info_residual(src, n, trials, c.seed, ExchangeableSource::TypeClass).q95_ratio;
        double b = self_info_residual(src, n, trials, c.seed, ExchangeableSource::TypeMixture).q95_ratio;
        double d = self_info_residual(src, n, trials, c.seed, ExchangeableSource::IID).q95_ratio;
        s.add({static_cast<double>(n), a, b, d});
    }
    s.write(out_path(c, "selfinfo.csv"), manifest(c, "typedev", ""));
    if (c.trace) {
        std::vector<std::string> cols = {"n"};
        for (std::size_t i = 0; i < src.size(); ++i) cols.push_back("G_" + std::to_string(i));
        CsvTable g(cols);
        for (const auto& r : rows)
            for (Eigen::Index i = 0; i < r.G.rows(); ++i) {
                std::vector<double> v = {static_cast<double>(r.n)};
                for (Eigen::Index k = 0; k < r.G.cols(); ++k) v.push_back(r.G(i, k));
                g.add(v);
            }
        g.write(out_path(c, "typedev_samples.csv"), manifest(c, "typedev", ""));
    }
    return 0;
}

int cmd_compare(const Common& c) {
    json j = read_json_file(c.instance);
    CodingInstance inst = instance_from_json(j);
    std::unique_ptr<TimeSharing> ts;
    if (j.contains("family") && j.contains("D") && !j.contains("beta"))
        ts = std::make_unique<TimeSharing>(wkt_binary_default(j.at("p").get<double>(), j.at("D").get<double>(), inst.lambda[0]));
    std::vector<double> W = parse_grid(c.grid.empty() ? "0.2,0.5,1" : c.grid);
    auto rows = comparison_suite(inst, W, ts.get());
    CsvTable t({"W", "thm2", "thm2_radius", "la", "vyag", "wkt", "radius"});
    int status = 0;
    for (const auto& r : rows) {
        t.add({r.W, r.thm2, r.thm2_radius, r.la, r.vyag, r.wkt, r.radius});
        if (!(r.thm2_le_la && r.la_le_vyag && r.wkt_ok)) {
            std::cerr << "compare: ordering violated at W=" << fmt_num(r.W) << "\n";
            status = 1;
        }
    }
    t.write(out_path(c, "compare.csv"), manifest(c, "compare", instance_digest(inst)));
    return status;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"second-order bounds and coding-scheme simulation"};
    app.require_subcommand(1);
    Common c;
    for (int i = 1; i < argc; ++i) c.args += (i > 1 ? " " : "") + std::string(argv[i]);

    auto* rd = app.add_subcommand("rd", "rate-distortion function and dispersion over a D grid");
    add_common(rd, c);

    std::string p_list = "0.1,0.2,0.4";
    auto* fig = app.add_subcommand("figure3", "binary-Hamming Wyner-Ziv dispersion comparison");
    add_common(fig, c, false);
    fig->add_option("--p", p_list, "crossover probabilities, comma separated");

    long n = 0;
    double eps = 0.0;
    auto* bound = app.add_subcommand("bound", "second-order terms of an instance");
    add_common(bound, c);
    bound->add_option("--n", n, "blocklength for the rate at epsilon");
    bound->add_option("--epsilon", eps, "target error probability");

    long sn = 8;
    double rate = 0.5, delta = 1.0;
    bool no_slack = false, tail = false, serial = false;
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo run of the coding scheme");
    add_common(sim, c);
    sim->add_option("--n", sn, "blocklength");
    sim->add_option("--rate", rate, "rate in bits per symbol");
    sim->add_option("--delta", delta, "distortion slack numerator");
    sim->add_flag("--no-slack", no_slack, "test against D without the delta/n slack");
    sim->add_flag("--tail-repair", tail, "append ceil(log2 n) greedy symbols (with --no-slack)");
    sim->add_flag("--serial", serial, "run without threads");

    std::string pmf = "0.5,0.5";
    auto* td = app.add_subcommand("typedev", "type-deviation and self-information diagnostics");
    add_common(td, c);
    td->add_option("--pmf", pmf, "source pmf when no instance is given");

    auto* cmp = app.add_subcommand("compare", "expected error bound against the competitor bounds on a W grid");
    add_common(cmp, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        if (*rd) return cmd_rd(c);
        if (*fig) return cmd_figure3(c, p_list);
        if (*bound) return cmd_bound(c, n, eps);
        if (*sim) return cmd_simulate(c, sn, rate, no_slack, delta, tail, serial);
        if (*td) return cmd_typedev(c, pmf);
        if (*cmp) return cmd_compare(c);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace secord::cli
