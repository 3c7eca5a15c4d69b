// Campaign driver. Exit codes:
//   0  run completed (uncorrectable outcomes did not outnumber corrected)
//   1  run completed but uncorrectable outcomes outnumber corrected ones
//   2  configuration error (arguments, manifest, shapes, fault plan)
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "efta/campaign.hpp"
#include "efta/manifest.hpp"

using nlohmann::json;
using namespace efta;

namespace {

// "random" | "random:SITE,SITE" | "SITE:i:j:row:col:bit[:trigger]" | "none"
void configure_injection(const std::string& text, const AttnConfig& cfg, CampaignOptions& opt) {
    if (text.empty() || text == "none") {
        opt.inject = InjectKind::NONE;
        return;
    }
    if (text == "random") {
        opt.inject = InjectKind::RANDOM;
        return;
    }
    if (text.rfind("random:", 0) == 0) {
        opt.inject = InjectKind::RANDOM;
        std::stringstream ss(text.substr(7));
        std::string name;
        while (std::getline(ss, name, ',')) {
            auto site = fault_site_from_name(name);
            if (!site) throw ConfigError("unknown fault site '" + name + "'");
            opt.sites.push_back(*site);
        }
        if (opt.sites.empty()) throw ConfigError("inject random: no sites given");
        return;
    }
    opt.inject = InjectKind::FIXED;
    opt.fixed_plan.specs.push_back(FaultSpec::parse(text));
    opt.fixed_plan.validate(cfg);
}

json counters_json(const Counters& c) {
    json j;
    j["flops_main"] = c.flops_main;
    j["flops_checksum"] = c.flops_checksum;
    j["flops_verify"] = c.flops_verify;
    j["hbm_reads"] = c.hbm_reads;
    j["hbm_writes"] = c.hbm_writes;
    j["intermediate_elems"] = c.intermediate_elems;
    j["flops_main_gemm_scores"] = c.flops_main_gemm_scores;
    j["flops_cs_gemm_scores"] = c.flops_cs_gemm_scores;
    j["flops_main_gemm_output"] = c.flops_main_gemm_output;
    j["flops_cs_gemm_output"] = c.flops_cs_gemm_output;
    j["flops_cs_encode"] = c.flops_cs_encode;
    j["exp_checks"] = c.exp_checks;
    j["output_checks"] = c.output_checks;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    bool exit_early = false;
    int code = 0;
    RunManifest m;
    try {
        m = parse_args(argc, argv, exit_early, code);
        if (exit_early) return code;

        const AttnConfig cfg = m.config();
        const FTMode mode = m.ft_mode();

        CampaignOptions opt;
        opt.cfg = cfg;
        opt.mode = mode;
        opt.trials = m.trials;
        opt.seed = m.seed;
        opt.jobs = m.jobs;
        configure_injection(m.inject, cfg, opt);

        // thresholds: calibrate, then let explicit overrides win
        json jthr;
        if (m.calibrate > 0 && mode != FTMode::NONE) {
            CalibrationResult cal =
                calibrate_thresholds(cfg, mode, m.calibrate, m.safety, m.seed ^ 0xca11b7a7ull);
            opt.thr = cal.thr;
            jthr["calibrated"] = true;
            jthr["calibration_trials"] = m.calibrate;
            jthr["safety"] = m.safety;
            jthr["max_clean_exp"] = cal.max_exp;
            jthr["max_clean_out"] = cal.max_out;
            jthr["max_clean_lin"] = cal.max_lin;
            jthr["degenerate"] = cal.degenerate;
        } else {
            opt.thr = Thresholds::reference_defaults();
            jthr["calibrated"] = false;
        }
        if (m.eps1 >= 0) opt.thr.eps1 = m.eps1;
        if (m.eps2 >= 0) opt.thr.eps2 = m.eps2;
        if (m.eps_lin >= 0) opt.thr.eps_lin = m.eps_lin;
        jthr["eps1"] = opt.thr.eps1;
        jthr["eps2"] = opt.thr.eps2;
        jthr["eps_lin"] = opt.thr.eps_lin;

        const CampaignStats stats = run_campaign(opt);

        std::filesystem::create_directories(m.out_dir);
        m.save(m.out_dir + "/manifest.json");
        if (m.format == "csv" || m.format == "both")
            write_trials_csv(m.out_dir + "/trials.csv", stats);

        if (m.format == "json" || m.format == "both") {
            json j;
            j["mode"] = ft_mode_name(mode);
            j["config"] = {{"seq_len", cfg.seq_len}, {"head_dim", cfg.head_dim},
                           {"block", cfg.block},     {"stride", cfg.stride},
                           {"heads", cfg.heads},     {"scale", cfg.scale}};
            j["thresholds"] = jthr;
            j["stats"] = {{"trials", stats.trials},
                          {"injected", stats.injected},
                          {"fired", stats.fired},
                          {"detected", stats.detected},
                          {"false_alarms", stats.false_alarms},
                          {"corrected", stats.corrected},
                          {"range_restricted", stats.range_restricted},
                          {"masked_benign", stats.masked_benign},
                          {"range_contract", stats.range_contract},
                          {"uncorrectable", stats.uncorrectable},
                          {"argmax_preserved", stats.argmax_preserved},
                          {"max_corrected_residual", stats.max_corrected_residual},
                          {"coverage", stats.coverage()}};
            j["counters"] = counters_json(stats.counters);

            const OverheadReport ov = overhead_report(cfg, mode, stats.counters);
            j["overhead"] = {{"checksum_over_main", ov.checksum_over_main},
                             {"verify_over_main", ov.verify_over_main},
                             {"ft_over_main", ov.ft_over_main},
                             {"scores_cs_measured", ov.scores_cs_measured},
                             {"scores_cs_predicted", ov.scores_cs_predicted},
                             {"output_cs_measured", ov.output_cs_measured},
                             {"output_cs_predicted", ov.output_cs_predicted},
                             {"scores_identity_exact", ov.scores_identity_exact},
                             {"output_identity_exact", ov.output_identity_exact},
                             {"intermediate_elems", ov.intermediate_elems}};

            if (m.sweep > 0 && mode != FTMode::NONE) {
                auto sweep = threshold_sweep(cfg, mode, opt.thr, m.sweep, m.seed ^ 0x5feebull);
                json js = json::array();
                for (const auto& p : sweep)
                    js.push_back({{"multiplier", p.multiplier},
                                  {"detection_rate", p.detection_rate},
                                  {"false_alarm_rate", p.false_alarm_rate}});
                j["sweep"] = js;
            }

            std::ofstream out(m.out_dir + "/summary.json");
            if (!out) throw ConfigError("cannot write summary.json");
            out << j.dump(2) << "\n";
        }

        std::cout << "mode=" << ft_mode_name(mode) << " trials=" << stats.trials
                  << " detected=" << stats.detected << " corrected=" << stats.corrected
                  << " range_restricted=" << stats.range_restricted
                  << " masked_benign=" << stats.masked_benign
                  << " range_contract=" << stats.range_contract
                  << " uncorrectable=" << stats.uncorrectable
                  << " false_alarms=" << stats.false_alarms << "\n";

        return stats.uncorrectable > stats.corrected ? 1 : 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
