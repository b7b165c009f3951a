// Quality metrics, experiment orchestration, and reports: trains every
// configured component on a train corpus, evaluates all methods on a held-out
// test corpus, and emits deterministic JSON/text reports plus CSV curves.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctfusion/afbp.hpp"
#include "ctfusion/core.hpp"
#include "ctfusion/fbp.hpp"
#include "ctfusion/io.hpp"
#include "ctfusion/iterative.hpp"
#include "ctfusion/legone.hpp"
#include "ctfusion/nnfusion.hpp"
#include "ctfusion/noise.hpp"
#include "ctfusion/phantom.hpp"
#include "ctfusion/radon.hpp"

namespace ctfusion {

/// Signal-to-noise ratio in dB: -20 log10(||ref - est|| / ||ref||) over the
/// optionally masked pixels, capped at 300 dB for exact matches.
inline double snr_db(const Image& ref, const Image& est, const Image* mask = nullptr) {
    if (ref.size != est.size) throw shape_error("snr_db: image size mismatch");
    if (mask && mask->size != ref.size) throw shape_error("snr_db: mask size mismatch");
    double num = 0.0, den = 0.0;
    for (size_t p = 0; p < ref.v.size(); ++p) {
        const double wgt = mask ? mask->v[p] : 1.0;
        const double d = ref.v[p] - est.v[p];
        num += wgt * d * d;
        den += wgt * ref.v[p] * ref.v[p];
    }
    if (den <= 0.0) throw degenerate_error("snr_db: reference has zero norm over the region");
    if (num == 0.0) return 300.0;
    return std::min(300.0, -10.0 * std::log10(num / den));
}

/// 8-bit binary PGM export, min-max normalized (constant images map to 0).
inline void write_pgm(const std::string& path, const Image& f) {
    double lo = f.v.empty() ? 0.0 : f.v[0], hi = lo;
    for (double x : f.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::string bytes = "P5\n" + std::to_string(f.size) + " " + std::to_string(f.size) + "\n255\n";
    for (double x : f.v)
        bytes.push_back(char(uint8_t(std::lround((x - lo) * scale))));
    save_bytes(path, bytes);
}

// ---- Reconstructor builders -------------------------------------------------

/// Plain FBP under the given projection filter.
inline Reconstructor make_fbp_reconstructor(const ScanGeometry& geom,
                                            const ProjectionFilter1D& filter) {
    RadonOperator op(geom);
    return Reconstructor{filter.tag(),
                         [op, filter](const Sinogram& g) { return fbp_reconstruct(g, filter, op); }};
}

/// FBP preceded by outward replication of the measured band (the standard
/// way to push truncated scans through an untrained linear method).
inline Reconstructor make_fbp_completed_reconstructor(const ScanGeometry& geom,
                                                      const ProjectionFilter1D& filter,
                                                      const RoiSpec& roi) {
    RadonOperator op(geom);
    const BinRange band = measured_band(roi, geom);
    return Reconstructor{"completed+" + filter.tag(), [op, filter, band](const Sinogram& g) {
                             return fbp_reconstruct(complete_sinogram(g, band), filter, op);
                         }};
}

/// Trained kernel-bank reconstruction.
inline Reconstructor make_afbp_reconstructor(const KernelBank& bank) {
    RadonOperator op(bank.geom);
    return Reconstructor{bank.tag,
                         [op, bank](const Sinogram& g) { return apply_afbp(g, bank, op); }};
}

/// Index of the schedule member with the best mean SNR over the given
/// (reference, measurement) pairs; ties resolve to the earlier entry.
inline int choose_best_filter(const std::vector<Image>& refs, const std::vector<Sinogram>& sinos,
                              const std::vector<Reconstructor>& bank, const Image* mask = nullptr) {
    if (refs.empty() || refs.size() != sinos.size())
        throw config_error("choose_best_filter: need matching references and scans");
    if (bank.empty()) throw config_error("choose_best_filter: empty bank");
    int best = 0;
    double best_snr = -1e300;
    for (size_t i = 0; i < bank.size(); ++i) {
        double mean = 0.0;
        for (size_t t = 0; t < refs.size(); ++t)
            mean += snr_db(refs[t], bank[i].apply(sinos[t]), mask);
        mean /= double(refs.size());
        if (mean > best_snr + 1e-12) {
            best_snr = mean;
            best = int(i);
        }
    }
    return best;
}

// ---- Experiment configuration ----------------------------------------------

enum class Scenario { full_scan, roi };

inline std::string scenario_name(Scenario s) {
    return s == Scenario::full_scan ? "full-scan" : "roi";
}

struct ExperimentConfig {
    Scenario scenario = Scenario::full_scan;

    static ScanGeometry default_geometry() {
        ScanGeometry g(90, 95, 64, 32.0);
        g.fbp_norm = 0.0;  // 0 => calibrate on the fly
        return g;
    }
    ScanGeometry geom = default_geometry();
    double source_intensity = 1200.0;
    double min_count_target = 60.0;

    int train_count = 15;
    int test_count = 8;
    uint64_t train_seed = 101;
    uint64_t test_seed = 202;
    uint64_t noise_seed = 777;
    PhantomConfig phantom;  // seed overridden per corpus

    RoiSpec roi{16.0};  // roi scenario only

    // Linear estimator schedule (strictly decreasing cutoffs = growing blur).
    // The sharp end sits at the noise-optimal cutoff for the default protocol;
    // sharper members are noise-dominated and the interval switch inherits
    // their noise wherever it stops early, which costs more than it buys.
    double schedule_p = 2.0;
    double schedule_q_hi = 0.45;
    double schedule_q_lo = 0.10;
    int schedule_count = 10;

    int legone_instances = 16;

    int afbp_segments = 5;
    int afbp_angle_extent = 5;
    int afbp_bins_extent = 0;  // 0 => derived from the measured band
    int afbp_image_kernel = 0;  // 0 => derived from the image size
    int afbp_quality_instances = 4;
    int afbp_cg_iters = 8;
    int afbp_alternations = 6;
    std::vector<double> blur_sigmas;  // roi fusion bank; empty => 0.35*i, i=1..10
    int blur_cg_iters = 6;
    int blur_alternations = 3;

    int nn_neurons = 24;
    int nn_restarts = 3;
    int nn_max_iters = 500;
    size_t nn_samples = 16000;

    PLConfig pl;

    std::vector<std::string> methods;  // empty => scenario default

    std::vector<std::string> effective_methods() const {
        if (!methods.empty()) return methods;
        if (scenario == Scenario::full_scan) return {"fbp", "legone", "spades"};
        return {"fbp-trunc", "fbp-full", "afbp", "spades"};
    }

    std::vector<double> effective_blur_sigmas() const {
        if (!blur_sigmas.empty()) return blur_sigmas;
        std::vector<double> s;
        for (int i = 1; i <= 10; ++i) s.push_back(0.35 * i);
        return s;
    }

    void validate() const {
        if (geom.n_angles < 1 || geom.n_bins < 2 || geom.image_size < 2 ||
            geom.support_radius <= 0.0)
            throw config_error("ExperimentConfig: invalid geometry");
        if (train_count < 1 || test_count < 1)
            throw config_error("ExperimentConfig: need nonempty corpora");
        if (train_seed == test_seed)
            throw config_error("ExperimentConfig: train and test corpora must use distinct seeds");
        if (source_intensity <= 0.0 || min_count_target <= 0.0 ||
            min_count_target >= source_intensity)
            throw config_error("ExperimentConfig: need 0 < min count < source intensity");
        if (schedule_count < 1 || !(schedule_q_hi > schedule_q_lo) || schedule_q_lo <= 0.0)
            throw config_error("ExperimentConfig: cutoff schedule must strictly decrease");
        if (scenario == Scenario::roi) roi.check_against(geom);
        const auto names = effective_methods();
        for (size_t i = 0; i < names.size(); ++i)
            for (size_t j = i + 1; j < names.size(); ++j)
                if (names[i] == names[j])
                    throw config_error("ExperimentConfig: duplicate method '" + names[i] + "'");
        const std::vector<std::string> known_full = {"fbp", "legone", "spades", "pl"};
        const std::vector<std::string> known_roi = {"fbp-trunc", "fbp-full", "afbp", "spades"};
        const auto& known = scenario == Scenario::full_scan ? known_full : known_roi;
        for (const auto& m : names)
            if (std::find(known.begin(), known.end(), m) == known.end())
                throw config_error("ExperimentConfig: unknown method '" + m + "' for scenario " +
                                   scenario_name(scenario));
    }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

inline nlohmann::json ExperimentConfig::to_json() const {
    return nlohmann::json{
        {"scenario", scenario_name(scenario)},
        {"geometry",
         {{"n_angles", geom.n_angles},
          {"n_bins", geom.n_bins},
          {"support_radius", geom.support_radius},
          {"image_size", geom.image_size},
          {"fbp_norm", geom.fbp_norm}}},
        {"protocol",
         {{"source_intensity", source_intensity}, {"min_count_target", min_count_target}}},
        {"corpus",
         {{"train_count", train_count},
          {"test_count", test_count},
          {"train_seed", train_seed},
          {"test_seed", test_seed}}},
        {"noise_seed", noise_seed},
        {"roi", {{"radius", roi.roi_radius}, {"measurement_radius", roi.measurement_radius}}},
        {"schedule",
         {{"p", schedule_p}, {"q_hi", schedule_q_hi}, {"q_lo", schedule_q_lo},
          {"count", schedule_count}}},
        {"legone", {{"instances", legone_instances}}},
        {"afbp",
         {{"segments", afbp_segments},
          {"angle_extent", afbp_angle_extent},
          {"bins_extent", afbp_bins_extent},
          {"image_kernel", afbp_image_kernel},
          {"quality_instances", afbp_quality_instances},
          {"cg_iters", afbp_cg_iters},
          {"alternations", afbp_alternations},
          {"blur_sigmas", blur_sigmas},
          {"blur_cg_iters", blur_cg_iters},
          {"blur_alternations", blur_alternations}}},
        {"nn",
         {{"neurons", nn_neurons},
          {"restarts", nn_restarts},
          {"max_iters", nn_max_iters},
          {"samples", nn_samples}}},
        {"pl", {{"beta", pl.beta}, {"delta", pl.delta}, {"max_iters", pl.max_iters}}},
        {"methods", methods}};
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    const std::string sc = j.value("scenario", scenario_name(cfg.scenario));
    if (sc == "full-scan")
        cfg.scenario = Scenario::full_scan;
    else if (sc == "roi")
        cfg.scenario = Scenario::roi;
    else
        throw config_error("ExperimentConfig: unknown scenario '" + sc + "'");
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        cfg.geom.n_angles = g.value("n_angles", cfg.geom.n_angles);
        cfg.geom.n_bins = g.value("n_bins", cfg.geom.n_bins);
        cfg.geom.support_radius = g.value("support_radius", cfg.geom.support_radius);
        cfg.geom.image_size = g.value("image_size", cfg.geom.image_size);
        cfg.geom.fbp_norm = g.value("fbp_norm", cfg.geom.fbp_norm);
    }
    if (j.contains("protocol")) {
        const auto& p = j.at("protocol");
        cfg.source_intensity = p.value("source_intensity", cfg.source_intensity);
        cfg.min_count_target = p.value("min_count_target", cfg.min_count_target);
    }
    if (j.contains("corpus")) {
        const auto& c = j.at("corpus");
        cfg.train_count = c.value("train_count", cfg.train_count);
        cfg.test_count = c.value("test_count", cfg.test_count);
        cfg.train_seed = c.value("train_seed", cfg.train_seed);
        cfg.test_seed = c.value("test_seed", cfg.test_seed);
    }
    cfg.noise_seed = j.value("noise_seed", cfg.noise_seed);
    if (j.contains("roi")) {
        const auto& r = j.at("roi");
        cfg.roi = RoiSpec(r.value("radius", 16.0), r.value("measurement_radius", -1.0));
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        cfg.schedule_p = s.value("p", cfg.schedule_p);
        cfg.schedule_q_hi = s.value("q_hi", cfg.schedule_q_hi);
        cfg.schedule_q_lo = s.value("q_lo", cfg.schedule_q_lo);
        cfg.schedule_count = s.value("count", cfg.schedule_count);
    }
    if (j.contains("legone"))
        cfg.legone_instances = j.at("legone").value("instances", cfg.legone_instances);
    if (j.contains("afbp")) {
        const auto& a = j.at("afbp");
        cfg.afbp_segments = a.value("segments", cfg.afbp_segments);
        cfg.afbp_angle_extent = a.value("angle_extent", cfg.afbp_angle_extent);
        cfg.afbp_bins_extent = a.value("bins_extent", cfg.afbp_bins_extent);
        cfg.afbp_image_kernel = a.value("image_kernel", cfg.afbp_image_kernel);
        cfg.afbp_quality_instances = a.value("quality_instances", cfg.afbp_quality_instances);
        cfg.afbp_cg_iters = a.value("cg_iters", cfg.afbp_cg_iters);
        cfg.afbp_alternations = a.value("alternations", cfg.afbp_alternations);
        cfg.blur_sigmas = a.value("blur_sigmas", cfg.blur_sigmas);
        cfg.blur_cg_iters = a.value("blur_cg_iters", cfg.blur_cg_iters);
        cfg.blur_alternations = a.value("blur_alternations", cfg.blur_alternations);
    }
    if (j.contains("nn")) {
        const auto& n = j.at("nn");
        cfg.nn_neurons = n.value("neurons", cfg.nn_neurons);
        cfg.nn_restarts = n.value("restarts", cfg.nn_restarts);
        cfg.nn_max_iters = n.value("max_iters", cfg.nn_max_iters);
        cfg.nn_samples = n.value("samples", cfg.nn_samples);
    }
    if (j.contains("pl")) {
        const auto& p = j.at("pl");
        cfg.pl.beta = p.value("beta", cfg.pl.beta);
        cfg.pl.delta = p.value("delta", cfg.pl.delta);
        cfg.pl.max_iters = p.value("max_iters", cfg.pl.max_iters);
    }
    cfg.methods = j.value("methods", cfg.methods);
    return cfg;
}

// ---- Report -----------------------------------------------------------------

struct MethodResult {
    std::string name;
    std::vector<double> snrs;  // per test image, dB
    double mean = 0.0;
    double stdev = 0.0;
    nlohmann::json details;  // deterministic counters / chosen parameters

    void finalize() {
        mean = 0.0;
        for (double s : snrs) mean += s;
        mean /= double(snrs.size());
        double acc = 0.0;
        for (double s : snrs) acc += (s - mean) * (s - mean);
        stdev = snrs.size() > 1 ? std::sqrt(acc / double(snrs.size() - 1)) : 0.0;
    }
};

struct Report {
    std::string scenario;
    int train_images = 0;
    int test_images = 0;
    nlohmann::json geometry;
    std::vector<MethodResult> methods;
    std::vector<std::pair<std::string, std::string>> artifacts;  // (name, path)

    const MethodResult& method(const std::string& name) const {
        for (const auto& m : methods)
            if (m.name == name) return m;
        throw config_error("Report: no method '" + name + "'");
    }

    nlohmann::json to_json() const {
        nlohmann::json jm = nlohmann::json::array();
        for (const auto& m : methods)
            jm.push_back({{"name", m.name},
                          {"snr_mean_db", m.mean},
                          {"snr_std_db", m.stdev},
                          {"snr_values_db", m.snrs},
                          {"details", m.details}});
        nlohmann::json ja = nlohmann::json::array();
        for (const auto& a : artifacts) ja.push_back({{"name", a.first}, {"path", a.second}});
        return nlohmann::json{{"scenario", scenario},
                              {"train_images", train_images},
                              {"test_images", test_images},
                              {"geometry", geometry},
                              {"methods", jm},
                              {"artifacts", ja}};
    }

    std::string to_text() const {
        std::string out = "scenario: " + scenario + "  (train " + std::to_string(train_images) +
                          ", test " + std::to_string(test_images) + ")\n";
        char line[160];
        std::snprintf(line, sizeof(line), "%-12s %12s %10s\n", "method", "mean SNR dB", "std dB");
        out += line;
        for (const auto& m : methods) {
            std::snprintf(line, sizeof(line), "%-12s %12.3f %10.3f\n", m.name.c_str(), m.mean,
                          m.stdev);
            out += line;
        }
        return out;
    }
};

// ---- Experiment driver --------------------------------------------------------

namespace detail {

struct ExperimentData {
    ScanGeometry geom;
    ScanProtocol protocol;
    std::vector<Image> train_refs, test_refs;
    std::vector<Sinogram> train_clean, test_clean;
    std::vector<Sinogram> train_noisy, test_noisy;
    std::vector<Sinogram> test_counts;
};

inline ExperimentData prepare_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData data;
    data.geom = cfg.geom;
    if (data.geom.fbp_norm <= 0.0) data.geom = calibrate_fbp_norm(data.geom);

    PhantomConfig pc = cfg.phantom;
    pc.image_size = data.geom.image_size;
    pc.seed = cfg.train_seed;
    data.train_refs = make_corpus(pc, cfg.train_count);
    pc.seed = cfg.test_seed;
    data.test_refs = make_corpus(pc, cfg.test_count);

    RadonOperator op(data.geom);
    for (const Image& f : data.train_refs) data.train_clean.push_back(op.project(f));
    for (const Image& f : data.test_refs) data.test_clean.push_back(op.project(f));

    data.protocol =
        calibrate_scale(data.train_clean, cfg.source_intensity, cfg.min_count_target);

    const Rng noise(cfg.noise_seed);
    const Rng train_noise = noise.stream(1);
    const Rng test_noise = noise.stream(3);
    for (size_t t = 0; t < data.train_clean.size(); ++t)
        data.train_noisy.push_back(
            simulate_noisy_sinogram(data.train_clean[t], data.protocol, train_noise.stream(t)));
    for (size_t u = 0; u < data.test_clean.size(); ++u) {
        const Sinogram y0 = expected_counts(data.test_clean[u], data.protocol);
        Sinogram y = sample_counts(y0, test_noise.stream(u));
        data.test_noisy.push_back(counts_to_sinogram(y, data.protocol));
        data.test_counts.push_back(std::move(y));
    }
    return data;
}

inline std::vector<Reconstructor> make_schedule_bank(const ExperimentConfig& cfg,
                                                     const ScanGeometry& geom) {
    const CutoffSchedule sched = CutoffSchedule::decreasing(
        cfg.schedule_p, cfg.schedule_q_hi, cfg.schedule_q_lo, cfg.schedule_count);
    std::vector<Reconstructor> bank;
    for (const auto& e : sched.entries)
        bank.push_back(make_fbp_reconstructor(
            geom, butterworth_apodize(ramlak_filter(geom), e.p, e.q)));
    return bank;
}

}  // namespace detail

/// Trains every component the configured methods need on the train corpus,
/// evaluates each method on the held-out test corpus, and assembles the
/// report. Fully deterministic given the config seeds; independent of the
/// worker-thread count. When artifact_dir is nonempty, trained banks/nets
/// and sample outputs are written there and recorded in the report.
inline Report run_experiment(const ExperimentConfig& cfg, const std::string& artifact_dir = "") {
    cfg.validate();
    detail::ExperimentData data = detail::prepare_experiment_data(cfg);
    const ScanGeometry& geom = data.geom;
    RadonOperator op(geom);
    const Rng master(cfg.noise_seed);

    Report report;
    report.scenario = scenario_name(cfg.scenario);
    report.train_images = cfg.train_count;
    report.test_images = cfg.test_count;
    report.geometry = {{"n_angles", geom.n_angles},
                       {"n_bins", geom.n_bins},
                       {"support_radius", geom.support_radius},
                       {"image_size", geom.image_size},
                       {"fbp_norm", geom.fbp_norm}};

    auto add_artifact = [&](const std::string& name, const std::string& file) {
        if (!artifact_dir.empty()) report.artifacts.emplace_back(name, file);
    };
    auto artifact_path = [&](const std::string& file) { return artifact_dir + "/" + file; };

    const std::vector<std::string> wanted = cfg.effective_methods();
    auto has_method = [&](const std::string& m) {
        return std::find(wanted.begin(), wanted.end(), m) != wanted.end();
    };

    if (cfg.scenario == Scenario::full_scan) {
        const std::vector<Reconstructor> bank = detail::make_schedule_bank(cfg, geom);
        const int best =
            choose_best_filter(data.train_refs, data.train_noisy, bank, nullptr);

        if (has_method("fbp")) {
            MethodResult m;
            m.name = "fbp";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(snr_db(data.test_refs[u], bank[size_t(best)].apply(data.test_noisy[u])));
            m.details = {{"filter", bank[size_t(best)].tag}, {"schedule_index", best}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        if (has_method("legone")) {
            LegoneCalibration cal =
                calibrate_confidence(data.train_refs, bank, geom, data.protocol,
                                     cfg.legone_instances, master.stream(2));
            MethodResult m;
            m.name = "legone";
            for (size_t u = 0; u < data.test_refs.size(); ++u) {
                std::vector<Image> estimates;
                for (const auto& rec : bank) estimates.push_back(rec.apply(data.test_noisy[u]));
                auto bounds = stochastic_bounds(cal.maps, cal.params);
                auto fused = legone_fuse(estimates, bounds);
                m.snrs.push_back(snr_db(data.test_refs[u], fused.first));
                if (u == 0 && !artifact_dir.empty()) {
                    write_pgm(artifact_path("legone_switch_map.pgm"), fused.second.indices);
                    add_artifact("legone switch map", "legone_switch_map.pgm");
                }
            }
            m.details = {{"kappa", cal.params.kappa_cal},
                         {"exponent", cal.params.q_exp},
                         {"instances", cfg.legone_instances},
                         {"train_mean_snr_db", cal.best_mean_snr}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        if (has_method("spades")) {
            const FeatureLayout layout = FeatureLayout::standard(int(bank.size()), best);
            std::vector<std::vector<Image>> stacks;
            for (const Sinogram& g : data.train_noisy) {
                std::vector<Image> stack;
                for (const auto& rec : bank) stack.push_back(rec.apply(g));
                stacks.push_back(std::move(stack));
            }
            TrainingBatch batch = build_training_batch(data.train_refs, stacks, layout,
                                                       cfg.nn_samples, master.stream(6));
            NetTrainConfig ncfg;
            ncfg.neurons = cfg.nn_neurons;
            ncfg.restarts = cfg.nn_restarts;
            ncfg.optimizer.max_iters = cfg.nn_max_iters;
            NetTrainResult tn = train_net(batch, layout, ncfg, master.stream(5));
            for (const auto& rec : bank) tn.net.bank_tags.push_back(rec.tag);
            if (!artifact_dir.empty()) {
                save_fusion_net(artifact_path("fusion_net.bin"), tn.net);
                add_artifact("fusion net", "fusion_net.bin");
            }
            MethodResult m;
            m.name = "spades";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(
                    snr_db(data.test_refs[u], spades_reconstruct(data.test_noisy[u], bank, tn.net)));
            m.details = {{"neurons", cfg.nn_neurons},
                         {"best_restart", tn.best_restart},
                         {"batch_rows", batch.rows()},
                         {"batch_clipped", batch.clipped},
                         {"train_objective", tn.final_objectives[size_t(tn.best_restart)]},
                         {"reference_index", best}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        if (has_method("pl")) {
            MethodResult m;
            m.name = "pl";
            int total_iters = 0;
            for (size_t u = 0; u < data.test_refs.size(); ++u) {
                PLResult r = pl_reconstruct(data.test_counts[u], cfg.pl, data.protocol, op);
                m.snrs.push_back(snr_db(data.test_refs[u], r.image));
                total_iters += r.iterations;
            }
            m.details = {{"beta", cfg.pl.beta},
                         {"delta", cfg.pl.delta},
                         {"total_iterations", total_iters}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }
    } else {
        // ROI scenario: measurements are truncated to the measured band.
        const Image roi_mask = roi_pixel_mask(cfg.roi, geom);
        const BinRange band = measured_band(cfg.roi, geom);
        std::vector<Sinogram> train_trunc, train_completed, test_trunc, test_completed;
        for (const Sinogram& g : data.train_noisy) {
            train_trunc.push_back(truncate_projections(g, cfg.roi));
            train_completed.push_back(complete_sinogram(train_trunc.back(), band));
        }
        for (const Sinogram& g : data.test_noisy) {
            test_trunc.push_back(truncate_projections(g, cfg.roi));
            test_completed.push_back(complete_sinogram(test_trunc.back(), band));
        }

        const std::vector<Reconstructor> schedule = detail::make_schedule_bank(cfg, geom);

        if (has_method("fbp-trunc")) {
            const int best =
                choose_best_filter(data.train_refs, train_completed, schedule, &roi_mask);
            MethodResult m;
            m.name = "fbp-trunc";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(snr_db(data.test_refs[u],
                                        schedule[size_t(best)].apply(test_completed[u]),
                                        &roi_mask));
            m.details = {{"filter", schedule[size_t(best)].tag},
                         {"band_completion", true}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        if (has_method("fbp-full")) {
            const int best =
                choose_best_filter(data.train_refs, data.train_noisy, schedule, &roi_mask);
            MethodResult m;
            m.name = "fbp-full";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(snr_db(data.test_refs[u],
                                        schedule[size_t(best)].apply(data.test_noisy[u]),
                                        &roi_mask));
            m.details = {{"filter", schedule[size_t(best)].tag}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        KernelBank quality_bank;
        bool have_quality = false;
        auto ensure_quality_bank = [&]() {
            if (have_quality) return;
            const int be = cfg.afbp_bins_extent > 0 ? cfg.afbp_bins_extent
                                                    : ((band.hi - band.lo + 1) | 1);
            const int ik = cfg.afbp_image_kernel > 0 ? cfg.afbp_image_kernel
                                                     : default_image_kernel_size(geom.image_size);
            KernelBank init = make_initial_bank(
                geom, cfg.roi, cfg.afbp_segments, cfg.afbp_angle_extent, be, ik,
                butterworth_apodize(ramlak_filter(geom), cfg.schedule_p, 0.5),
                cfg.roi.measurement_radius);
            TrainingRun run;
            run.cg_iters = cfg.afbp_cg_iters;
            run.max_alternations = cfg.afbp_alternations;
            quality_bank = train_afbp_quality(data.train_refs, cfg.roi, geom, data.protocol,
                                              cfg.afbp_quality_instances, master.stream(4),
                                              std::move(init), run);
            have_quality = true;
            if (!artifact_dir.empty()) {
                save_kernel_bank(artifact_path("afbp_quality_bank.bin"), quality_bank);
                add_artifact("afbp quality bank", "afbp_quality_bank.bin");
            }
        };

        if (has_method("afbp")) {
            ensure_quality_bank();
            Reconstructor rec = make_afbp_reconstructor(quality_bank);
            MethodResult m;
            m.name = "afbp";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(snr_db(data.test_refs[u], rec.apply(test_trunc[u]), &roi_mask));
            m.details = {{"tag", quality_bank.tag},
                         {"segments", quality_bank.d},
                         {"angle_extent", quality_bank.angle_extent},
                         {"bins_extent", quality_bank.bins_extent}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }

        if (has_method("spades")) {
            ensure_quality_bank();
            std::vector<Reconstructor> bank;
            bank.push_back(make_afbp_reconstructor(quality_bank));
            const std::vector<double> sigmas = cfg.effective_blur_sigmas();
            for (size_t i = 0; i < sigmas.size(); ++i) {
                const int be = cfg.afbp_bins_extent > 0 ? cfg.afbp_bins_extent
                                                        : ((band.hi - band.lo + 1) | 1);
                const int ik = cfg.afbp_image_kernel > 0
                                   ? cfg.afbp_image_kernel
                                   : default_image_kernel_size(geom.image_size);
                KernelBank init = make_initial_bank(
                    geom, cfg.roi, cfg.afbp_segments, cfg.afbp_angle_extent, be, ik,
                    butterworth_apodize(ramlak_filter(geom), cfg.schedule_p, 0.5),
                    cfg.roi.measurement_radius);
                TrainingRun run;
                run.cg_iters = cfg.blur_cg_iters;
                run.max_alternations = cfg.blur_alternations;
                KernelBank blur_bank = train_afbp_blur(data.train_refs, sigmas[i], cfg.roi, geom,
                                                       std::move(init), run);
                bank.push_back(make_afbp_reconstructor(blur_bank));
            }

            const FeatureLayout layout = FeatureLayout::standard(int(bank.size()), 0);
            std::vector<std::vector<Image>> stacks;
            for (const Sinogram& g : train_trunc) {
                std::vector<Image> stack;
                for (const auto& rec : bank) stack.push_back(rec.apply(g));
                stacks.push_back(std::move(stack));
            }
            TrainingBatch batch = build_training_batch(data.train_refs, stacks, layout,
                                                       cfg.nn_samples, master.stream(6),
                                                       &roi_mask);
            NetTrainConfig ncfg;
            ncfg.neurons = cfg.nn_neurons;
            ncfg.restarts = cfg.nn_restarts;
            ncfg.optimizer.max_iters = cfg.nn_max_iters;
            NetTrainResult tn = train_net(batch, layout, ncfg, master.stream(5));
            for (const auto& rec : bank) tn.net.bank_tags.push_back(rec.tag);
            if (!artifact_dir.empty()) {
                save_fusion_net(artifact_path("fusion_net.bin"), tn.net);
                add_artifact("fusion net", "fusion_net.bin");
            }

            MethodResult m;
            m.name = "spades";
            for (size_t u = 0; u < data.test_refs.size(); ++u)
                m.snrs.push_back(snr_db(data.test_refs[u],
                                        spades_reconstruct(test_trunc[u], bank, tn.net, &roi_mask),
                                        &roi_mask));
            m.details = {{"neurons", cfg.nn_neurons},
                         {"best_restart", tn.best_restart},
                         {"batch_rows", batch.rows()},
                         {"batch_clipped", batch.clipped},
                         {"estimators", int(bank.size())}};
            m.finalize();
            report.methods.push_back(std::move(m));
        }
    }

    if (!artifact_dir.empty()) {
        save_bytes(artifact_path("report.json"), report.to_json().dump(2) + "\n");
        add_artifact("report", "report.json");
    }
    return report;
}

// ---- Blur/quality curve -------------------------------------------------------

struct CurvePoint {
    std::string tag;
    double zeta = 0.0;      // fitted Gaussian width of the estimator
    double mean_snr = 0.0;  // mean test SNR, dB
};

/// For each estimator: the blur measure of its noiseless action and its mean
/// SNR on the noisy measurements. The mask (when given) restricts both.
inline std::vector<CurvePoint> blur_quality_curve(const std::vector<Reconstructor>& estimators,
                                                  const std::vector<Image>& refs,
                                                  const std::vector<Sinogram>& clean,
                                                  const std::vector<Sinogram>& noisy,
                                                  const Image* mask = nullptr,
                                                  const BlurMeasureConfig& bcfg = {}) {
    if (refs.empty() || refs.size() != clean.size() || refs.size() != noisy.size())
        throw config_error("blur_quality_curve: need aligned references and scans");
    if (estimators.empty()) throw config_error("blur_quality_curve: empty estimator list");
    std::vector<CurvePoint> points;
    for (const auto& rec : estimators) {
        CurvePoint pt;
        pt.tag = rec.tag;
        std::vector<Image> transformed;
        for (const Sinogram& g : clean) transformed.push_back(rec.apply(g));
        pt.zeta = blur_measure(transformed, refs, mask, bcfg);
        double mean = 0.0;
        for (size_t u = 0; u < refs.size(); ++u)
            mean += snr_db(refs[u], rec.apply(noisy[u]), mask);
        pt.mean_snr = mean / double(refs.size());
        points.push_back(std::move(pt));
    }
    return points;
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& points) {
    std::string out = "estimator,blur_zeta,mean_snr_db\n";
    char buf[256];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "\"%s\",%.17g,%.17g\n", p.tag.c_str(), p.zeta,
                      p.mean_snr);
        out += buf;
    }
    return out;
}

}  // namespace ctfusion
