#include "efta/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace efta {

using nlohmann::json;

AttnConfig RunManifest::config() const {
    return AttnConfig(seq_len, head_dim, block, stride, heads);
}

FTMode RunManifest::ft_mode() const {
    auto m = ft_mode_from_name(mode);
    if (!m) throw ConfigError("unknown mode '" + mode + "'");
    return *m;
}

std::string RunManifest::to_json_string() const {
    json j;
    j["seq_len"] = seq_len;
    j["head_dim"] = head_dim;
    j["block"] = block;
    j["stride"] = stride;
    j["heads"] = heads;
    j["mode"] = mode;
    j["trials"] = trials;
    j["seed"] = seed;
    j["calibrate"] = calibrate;
    j["safety"] = safety;
    j["eps1"] = eps1;
    j["eps2"] = eps2;
    j["eps_lin"] = eps_lin;
    j["inject"] = inject;
    j["sweep"] = sweep;
    j["out_dir"] = out_dir;
    j["format"] = format;
    j["jobs"] = jobs;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: invalid JSON: ") + e.what());
    }
    RunManifest m;
    try {
        j.at("seq_len").get_to(m.seq_len);
        j.at("head_dim").get_to(m.head_dim);
        j.at("block").get_to(m.block);
        j.at("stride").get_to(m.stride);
        j.at("heads").get_to(m.heads);
        j.at("mode").get_to(m.mode);
        j.at("trials").get_to(m.trials);
        j.at("seed").get_to(m.seed);
        j.at("calibrate").get_to(m.calibrate);
        j.at("safety").get_to(m.safety);
        j.at("eps1").get_to(m.eps1);
        j.at("eps2").get_to(m.eps2);
        j.at("eps_lin").get_to(m.eps_lin);
        j.at("inject").get_to(m.inject);
        j.at("sweep").get_to(m.sweep);
        j.at("out_dir").get_to(m.out_dir);
        j.at("format").get_to(m.format);
        j.at("jobs").get_to(m.jobs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: missing or mistyped field: ") + e.what());
    }
    return m;
}

void RunManifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("manifest: cannot write '" + path + "'");
    out << to_json_string();
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

bool RunManifest::operator==(const RunManifest& o) const {
    return seq_len == o.seq_len && head_dim == o.head_dim && block == o.block &&
           stride == o.stride && heads == o.heads && mode == o.mode && trials == o.trials &&
           seed == o.seed && calibrate == o.calibrate && safety == o.safety && eps1 == o.eps1 &&
           eps2 == o.eps2 && eps_lin == o.eps_lin && inject == o.inject && sweep == o.sweep &&
           out_dir == o.out_dir && format == o.format && jobs == o.jobs;
}

RunManifest parse_args(int argc, const char* const* argv, bool& exit_early, int& exit_code) {
    exit_early = false;
    exit_code = 0;

    CLI::App app{"Fault-tolerant blocked attention: fault-injection campaign driver"};
    std::string manifest_path;
    RunManifest m;

    app.add_option("--manifest", manifest_path, "load every option from a manifest file");
    auto* o_n = app.add_option("--seq-len", m.seq_len, "sequence length");
    auto* o_d = app.add_option("--head-dim", m.head_dim, "head dimension");
    auto* o_b = app.add_option("--block", m.block, "kernel block size");
    auto* o_s = app.add_option("--stride", m.stride, "checksum stride");
    auto* o_h = app.add_option("--heads", m.heads, "attention heads per trial");
    auto* o_m = app.add_option("--mode", m.mode, "none | efta | efta-opt | decoupled");
    auto* o_t = app.add_option("--trials", m.trials, "campaign trials");
    auto* o_seed = app.add_option("--seed", m.seed, "base seed");
    auto* o_cal = app.add_option("--calibrate", m.calibrate, "clean calibration runs (0: skip)");
    auto* o_saf = app.add_option("--safety", m.safety, "calibration safety factor");
    auto* o_e1 = app.add_option("--eps1", m.eps1, "exp-stage threshold override");
    auto* o_e2 = app.add_option("--eps2", m.eps2, "output threshold override");
    auto* o_el = app.add_option("--eps-lin", m.eps_lin, "score threshold override");
    auto* o_inj = app.add_option("--inject", m.inject,
                                 "none | random[:SITE,...] | SITE:i:j:row:col:bit[:trigger]");
    auto* o_sw = app.add_option("--sweep", m.sweep, "threshold-sweep observation trials");
    auto* o_out = app.add_option("--out", m.out_dir, "output directory");
    auto* o_fmt = app.add_option("--format", m.format, "csv | json | both");
    auto* o_j = app.add_option("--jobs", m.jobs, "worker threads");

    std::vector<std::string> args(argv + 1, argv + argc);
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        exit_early = true;
        exit_code = app.exit(e);
        return m;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("arguments: ") + e.what());
    }

    if (!manifest_path.empty()) {
        RunManifest base = RunManifest::load(manifest_path);
        // explicit flags win over the manifest
        if (*o_n) base.seq_len = m.seq_len;
        if (*o_d) base.head_dim = m.head_dim;
        if (*o_b) base.block = m.block;
        if (*o_s) base.stride = m.stride;
        if (*o_h) base.heads = m.heads;
        if (*o_m) base.mode = m.mode;
        if (*o_t) base.trials = m.trials;
        if (*o_seed) base.seed = m.seed;
        if (*o_cal) base.calibrate = m.calibrate;
        if (*o_saf) base.safety = m.safety;
        if (*o_e1) base.eps1 = m.eps1;
        if (*o_e2) base.eps2 = m.eps2;
        if (*o_el) base.eps_lin = m.eps_lin;
        if (*o_inj) base.inject = m.inject;
        if (*o_sw) base.sweep = m.sweep;
        if (*o_out) base.out_dir = m.out_dir;
        if (*o_fmt) base.format = m.format;
        if (*o_j) base.jobs = m.jobs;
        m = base;
    }

    if (m.format != "csv" && m.format != "json" && m.format != "both")
        throw ConfigError("format must be csv, json or both");
    if (m.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!ft_mode_from_name(m.mode)) throw ConfigError("unknown mode '" + m.mode + "'");
    return m;
}

}  // namespace efta
