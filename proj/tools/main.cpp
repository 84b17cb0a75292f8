#include "tsgrid/expr.hpp"
#include "tsgrid/io.hpp"
#include "tsgrid/sim.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace tsgrid;

namespace {

struct SimFlags {
    int64_t peers = 8;
    int64_t ring_bits = 32;
    int64_t core = 1024;
    int64_t halo = 128;
    int64_t cache = 8192;
    uint64_t seed = 1;
};

void add_geometry_flags(CLI::App* cmd, SimFlags& f) {
    cmd->add_option("--ring-bits", f.ring_bits, "identifier bits of the hash ring");
    cmd->add_option("--core", f.core, "segment core length");
    cmd->add_option("--halo", f.halo, "halo length copied on both sides of a core");
    cmd->add_option("--cache", f.cache, "per-peer cache capacity in segments");
    cmd->add_option("--seed", f.seed, "seed for peer ids and synthetic data");
}

sim::Config to_config(const SimFlags& f) {
    sim::Config cfg;
    cfg.peers = f.peers;
    cfg.ring_bits = static_cast<int>(f.ring_bits);
    cfg.spec = SegmentSpec{f.core, f.halo};
    cfg.cache_capacity = f.cache;
    cfg.seed = f.seed;
    return cfg;
}

// --data accepts NAME=path; a bare path names the series after the file stem
std::pair<std::string, std::string> split_data_arg(const std::string& text) {
    auto eq = text.find('=');
    if (eq != std::string::npos && eq > 0)
        return {text.substr(0, eq), text.substr(eq + 1)};
    return {std::filesystem::path(text).stem().string(), text};
}

bool is_xml_path(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".xml";
}

void write_result(std::ostream& out, const TimeSeries& s, bool xml) {
    if (xml)
        io::write_xml(out, s);
    else
        io::write_csv(out, s);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(Errc::config_error, "cannot write " + path);
    f << text;
}

// ---- run: evaluate one expression over files, centrally or on peers --------------

struct RunArgs {
    std::string expr_text;
    std::vector<std::string> data;
    bool central = false;
    SimFlags flags;
    std::string from_text, to_text, out_path, metrics_path, format, granularity;
};

int cmd_run(const RunArgs& a) {
    expr::parse(a.expr_text); // surface syntax/arity problems before any file work

    std::optional<Granularity> gran;
    if (!a.granularity.empty()) gran = granularity_from_name(a.granularity);
    std::optional<Timestamp> from, to;
    if (!a.from_text.empty()) from = parse_timestamp(a.from_text);
    if (!a.to_text.empty()) to = parse_timestamp(a.to_text);

    std::vector<std::pair<std::string, TimeSeries>> series;
    for (const std::string& d : a.data) {
        auto [name, path] = split_data_arg(d);
        series.emplace_back(name, io::load_series_file(path, gran));
    }

    TimeSeries result;
    std::string metrics_text;
    if (a.central) {
        expr::Store store;
        for (auto& [name, s] : series) store.emplace(name, s);
        result = expr::evaluate(expr::parse(a.expr_text), store);
        if (from || to) {
            Timestamp t0 = from.value_or(result.calendar().start());
            Timestamp t1 = to.value_or(result.calendar().grid_time(result.length() - 1));
            result = result.slice(t0, t1);
        }
        std::ostringstream m;
        m << "mode: central\n"
          << "series: " << series.size() << "\n"
          << "result_n: " << result.length() << "\n";
        metrics_text = m.str();
    } else {
        sim::Sim net(to_config(a.flags));
        for (auto& [name, s] : series) net.load_series(name, s);
        result = net.query(a.expr_text, from, to);
        metrics_text = net.metrics_document();
    }

    bool xml = a.format.empty() ? (!a.data.empty() && is_xml_path(split_data_arg(a.data[0]).second))
                                : a.format == "xml";
    if (a.out_path.empty()) {
        write_result(std::cout, result, xml);
    } else {
        std::ostringstream doc;
        write_result(doc, result, xml);
        write_text(a.out_path, doc.str());
    }
    if (a.metrics_path.empty())
        std::cout << metrics_text;
    else
        write_text(a.metrics_path, metrics_text);
    return 0;
}

// ---- bench: synthetic workload, centrally and per peer count ---------------------

struct BenchArgs {
    int64_t values = 0;
    std::vector<int64_t> peer_counts{1, 128};
    int64_t window = 100;
    int64_t repeat = 1;
    SimFlags flags;
};

int64_t operator_items(const std::string& text, int64_t n) {
    // one pass over the series per operator node, after macro expansion
    std::function<int64_t(const expr::ExprPtr&)> ops = [&](const expr::ExprPtr& t) {
        if (t->is_base()) return int64_t{0};
        int64_t sum = 1;
        for (const expr::Arg& arg : t->args)
            if (const expr::ExprPtr* child = std::get_if<expr::ExprPtr>(&arg))
                sum += ops(*child);
        return sum;
    };
    return ops(expr::expand_macros(expr::parse(text))) * n;
}

int cmd_bench(const BenchArgs& a) {
    if (a.repeat < 1) fail(Errc::config_error, "--repeat must be at least 1");
    if (a.peer_counts.empty()) fail(Errc::config_error, "--peers needs at least one count");

    const std::vector<std::string> workload = {
        "MAVG(S," + std::to_string(a.window) + ")",
        "MACD(S,12,26,9)",
    };

    std::ostream& out = std::cout;
    const SimFlags& f = a.flags;
    out << "bench: values=" << a.values << " window=" << a.window << " repeat=" << a.repeat
        << " seed=" << f.seed << " core=" << f.core << " halo=" << f.halo
        << " cache=" << f.cache << " ring_bits=" << f.ring_bits << "\n";

    // reference run: plain evaluation, one virtual cost and no network
    sim::CostModel cost;
    for (int64_t r = 1; r <= a.repeat; ++r) {
        TimeSeries s = sim::synthetic_walk(a.values, f.seed);
        expr::Store store{{"S", s}};
        int64_t items = 0;
        for (const std::string& q : workload) {
            (void)expr::evaluate(expr::parse(q), store);
            items += operator_items(q, a.values);
        }
        out << "run " << r << " central: virtual_ms=" << items * cost.per_item_ns / 1000000
            << "\n";
    }

    struct Row {
        int64_t peers, run;
        sim::Metrics cold, warm;
        std::string doc;
    };
    std::vector<Row> rows;
    for (int64_t peers : a.peer_counts) {
        for (int64_t r = 1; r <= a.repeat; ++r) {
            SimFlags pf = f;
            pf.peers = peers;
            sim::Sim net(to_config(pf));
            net.generate_series("S", a.values, f.seed);
            sim::Metrics loaded = net.metrics();
            for (const std::string& q : workload) net.query(q);
            sim::Metrics after_cold = net.metrics();
            for (const std::string& q : workload) net.query(q);
            rows.push_back({peers, r, after_cold - loaded, net.metrics() - after_cold,
                            net.metrics_document()});
        }
    }

    auto cell = [&](int64_t v) { out << std::setw(14) << v; };
    out << std::left << std::setw(12) << "config" << std::setw(5) << "run" << std::right;
    for (const char* phase : {"cold_", "warm_"})
        for (const char* col : {"msgs", "hops", "computed", "fetched", "virt_ms"})
            out << std::setw(14) << (std::string(phase) + col);
    out << "\n";
    for (const Row& row : rows) {
        out << std::left << std::setw(12) << ("peers=" + std::to_string(row.peers))
            << std::setw(5) << row.run << std::right;
        for (const sim::Metrics* m : {&row.cold, &row.warm}) {
            cell(m->messages);
            cell(m->routing_hops);
            cell(m->segments_computed);
            cell(m->segments_fetched);
            cell(m->wall_time_ns / 1000000);
        }
        out << "\n";
    }
    for (const Row& row : rows)
        out << "\n# metrics peers=" << row.peers << " run=" << row.run << "\n" << row.doc;
    return 0;
}

// ---- sim: drive a workload script -----------------------------------------------

int cmd_sim(const std::string& script, const SimFlags& flags, const std::string& trace) {
    sim::Config cfg = to_config(flags);
    cfg.trace_path = trace;
    sim::Sim net(cfg);
    if (script == "-") {
        net.run_script(std::cin, std::cout);
    } else {
        std::ifstream in(script);
        if (!in) fail(Errc::config_error, "cannot open script " + script);
        net.run_script(in, std::cout);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series queries over a simulated peer-to-peer segment grid"};
    app.require_subcommand(1);
    const char* env_cfg = std::getenv("TSGRID_CONFIG");
    app.set_config("--config", env_cfg ? env_cfg : "",
                   "INI defaults, [run]/[bench]/[sim] sections (default: $TSGRID_CONFIG)");

    RunArgs run;
    CLI::App* c_run = app.add_subcommand("run", "evaluate one expression over series files");
    c_run->add_option("--expr", run.expr_text, "query expression, e.g. \"MAVG(LVMH,12)\"")
        ->required();
    c_run->add_option("--data", run.data,
                      "series file (.xml or .csv), named by stem or NAME=path")
        ->required();
    CLI::Option* peers_opt =
        c_run->add_option("--peers", run.flags.peers, "evaluate on a simulated ring");
    c_run->add_flag("--central", run.central, "evaluate in-process instead of on peers")
        ->excludes(peers_opt);
    c_run->add_option("--from", run.from_text, "clip the result from this timestamp");
    c_run->add_option("--to", run.to_text, "clip the result up to this timestamp");
    c_run->add_option("--out", run.out_path, "write the result document here (default stdout)");
    c_run->add_option("--metrics", run.metrics_path,
                      "write the metrics document here (default stdout)");
    c_run->add_option("--format", run.format, "result format (default: input's)")
        ->check(CLI::IsMember({"xml", "csv"}));
    c_run->add_option("--granularity", run.granularity,
                      "grid granularity override (default: inferred)");
    add_geometry_flags(c_run, run.flags);

    BenchArgs bench;
    CLI::App* c_bench = app.add_subcommand("bench", "synthetic workload and counter table");
    c_bench->add_option("--values", bench.values, "series length")->required();
    c_bench->add_option("--peers", bench.peer_counts, "peer counts, e.g. 1,128")
        ->delimiter(',');
    c_bench->add_option("--window", bench.window, "moving-average window");
    c_bench->add_option("--repeat", bench.repeat, "measurement repetitions");
    add_geometry_flags(c_bench, bench.flags);

    std::string script_path = "-";
    std::string trace_path;
    SimFlags sim_flags;
    CLI::App* c_sim = app.add_subcommand("sim", "execute a workload script");
    c_sim->add_option("script", script_path, "script file, or - for stdin");
    c_sim->add_option("--trace", trace_path, "also write the message trace to this file");
    add_geometry_flags(c_sim, sim_flags);
    c_sim->add_option("--peers", sim_flags.peers, "peer count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_run->parsed()) return cmd_run(run);
        if (c_bench->parsed()) return cmd_bench(bench);
        return cmd_sim(script_path, sim_flags, trace_path);
    } catch (const Error& e) {
        std::cerr << "tsgrid: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "tsgrid: " << e.what() << "\n";
        return 1;
    }
}
