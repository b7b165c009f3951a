// Command-line front end for the ctfusion library. One subcommand per
// pipeline stage; binary containers carry their own geometry so most
// commands need no geometry flags. Exit codes: 0 success, 2 usage/config
// error, 3 I/O or format error, 4 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctfusion/afbp.hpp"
#include "ctfusion/core.hpp"
#include "ctfusion/eval.hpp"
#include "ctfusion/fbp.hpp"
#include "ctfusion/io.hpp"
#include "ctfusion/iterative.hpp"
#include "ctfusion/legone.hpp"
#include "ctfusion/nnfusion.hpp"
#include "ctfusion/noise.hpp"
#include "ctfusion/parallel.hpp"
#include "ctfusion/phantom.hpp"
#include "ctfusion/radon.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// shared helpers

/// Values from a JSON config file stand in for flags the user left unset;
/// explicit command-line flags always win. Keys are the long flag names
/// without the leading dashes. Unknown keys are rejected so a typo cannot
/// silently fall back to a default.
class ConfigMerge {
  public:
    ConfigMerge(const CLI::App* cmd, const std::string& path) : cmd_(cmd) {
        if (path.empty()) return;
        j_ = json::parse(ctfusion::load_bytes(path));
        if (!j_.is_object()) throw ctfusion::config_error("config file must hold a JSON object");
        active_ = true;
    }

    /// Returns true when the variable ends up explicitly set (flag or config).
    template <class T>
    bool take(const std::string& flag, T& var) {
        const std::string key = flag.substr(2);
        if (active_) claimed_.insert(key);
        if (cmd_->count(flag) > 0) return true;
        if (active_ && j_.contains(key)) {
            var = j_.at(key).get<T>();
            return true;
        }
        return false;
    }

    void finish() const {
        if (!active_) return;
        for (const auto& item : j_.items())
            if (!claimed_.count(item.key()))
                throw ctfusion::config_error("unknown config key '" + item.key() + "'");
    }

  private:
    const CLI::App* cmd_ = nullptr;
    json j_;
    bool active_ = false;
    std::set<std::string> claimed_;
};

void require_opt(bool present, const std::string& what) {
    if (!present) throw ctfusion::config_error("missing required option " + what);
}

void require_finite(const std::vector<double>& v, const std::string& what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw ctfusion::degenerate_error(what + " contains non-finite values");
}

std::vector<ctfusion::Image> load_images(const std::vector<std::string>& paths) {
    std::vector<ctfusion::Image> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(ctfusion::load_image(p));
    for (size_t i = 1; i < out.size(); ++i)
        if (out[i].size != out[0].size)
            throw ctfusion::config_error("images must share one grid size: " + paths[i]);
    return out;
}

/// Geometry flags shared by the commands that build a scan geometry from an
/// image rather than reading one from a container.
struct GeomFlags {
    int angles = 90;
    int bins = 95;
    double support = 0.0;   // <= 0: half the image size
    double fbp_norm = 0.0;  // <= 0: calibrated for the geometry
};

void add_geom_flags(CLI::App* cmd, GeomFlags& g) {
    cmd->add_option("--angles", g.angles, "number of projection angles");
    cmd->add_option("--bins", g.bins, "number of detector bins per view");
    cmd->add_option("--support", g.support, "object support radius (default: half the image)");
    cmd->add_option("--fbp-norm", g.fbp_norm, "FBP normalisation (default: calibrated)");
}

void merge_geom_flags(ConfigMerge& merge, GeomFlags& g) {
    merge.take("--angles", g.angles);
    merge.take("--bins", g.bins);
    merge.take("--support", g.support);
    merge.take("--fbp-norm", g.fbp_norm);
}

ctfusion::ScanGeometry resolve_geometry(const GeomFlags& gf, int image_size) {
    const double support = gf.support > 0.0 ? gf.support : image_size / 2.0;
    ctfusion::ScanGeometry geom(gf.angles, gf.bins, image_size, support);
    geom.fbp_norm = gf.fbp_norm;
    if (geom.fbp_norm <= 0.0) geom = ctfusion::calibrate_fbp_norm(geom);
    return geom;
}

/// Applies a norm override to a geometry loaded from a container, calibrating
/// when neither the flag nor the container supplies one.
ctfusion::ScanGeometry with_norm(ctfusion::ScanGeometry geom, double flag_norm) {
    if (flag_norm > 0.0) geom.fbp_norm = flag_norm;
    if (geom.fbp_norm <= 0.0) geom = ctfusion::calibrate_fbp_norm(geom);
    return geom;
}

std::vector<ctfusion::Reconstructor> schedule_bank(const ctfusion::ScanGeometry& geom, double p,
                                                   double q_hi, double q_lo, int count) {
    const auto sched = ctfusion::CutoffSchedule::decreasing(p, q_hi, q_lo, count);
    std::vector<ctfusion::Reconstructor> bank;
    bank.reserve(sched.entries.size());
    for (const auto& e : sched.entries)
        bank.push_back(ctfusion::make_fbp_reconstructor(
            geom, ctfusion::butterworth_apodize(ctfusion::ramlak_filter(geom), e.p, e.q)));
    return bank;
}

/// Disk mask on a bare image grid (for commands that never touch a scan).
ctfusion::Image make_disk_mask(double roi_r, double measured, int image_size) {
    const ctfusion::RoiSpec roi(roi_r, measured);
    const ctfusion::ScanGeometry geom(1, 2, image_size, image_size / 2.0);
    return ctfusion::roi_pixel_mask(roi, geom);
}

void apply_threads(int threads) {
    if (threads <= 0) {
        if (const char* env = std::getenv("CT_SPADES_THREADS")) {
            const int n = std::atoi(env);
            if (n > 0) threads = n;
        }
    }
    if (threads > 0) ctfusion::par::set_thread_count(threads);
}

// ---------------------------------------------------------------------------
// phantom-gen

struct PhantomGenOpts {
    int size = 64, min_inner = 8, max_inner = 20, levels = 4, index = 0;
    double boundary = 2.0;
    std::uint64_t seed = 0;
    std::string out, config;
};

void run_phantom_gen(const CLI::App& cmd, PhantomGenOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    merge.take("--size", o.size);
    merge.take("--min-inner", o.min_inner);
    merge.take("--max-inner", o.max_inner);
    merge.take("--levels", o.levels);
    merge.take("--boundary", o.boundary);
    merge.take("--index", o.index);
    const bool have_seed = merge.take("--seed", o.seed);
    const bool have_out = merge.take("--output", o.out);
    merge.finish();
    require_opt(have_seed, "--seed");
    require_opt(have_out, "--output");
    if (o.index < 0) throw ctfusion::config_error("--index must be nonnegative");

    ctfusion::PhantomConfig pc;
    pc.image_size = o.size;
    pc.min_inner = o.min_inner;
    pc.max_inner = o.max_inner;
    pc.intensity_levels = o.levels;
    pc.boundary_thickness = o.boundary;
    pc.seed = o.seed;
    const auto corpus = ctfusion::make_corpus(pc, o.index + 1);
    ctfusion::save_image(o.out, corpus[size_t(o.index)]);
    std::printf("wrote %s\n", o.out.c_str());
}

void setup_phantom_gen(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand("phantom-gen", "generate a reproducible synthetic test object");
    cmd->fallthrough();
    auto o = std::make_shared<PhantomGenOpts>();
    cmd->add_option("--size", o->size, "image grid size in pixels per side");
    cmd->add_option("--min-inner", o->min_inner, "fewest interior structures");
    cmd->add_option("--max-inner", o->max_inner, "most interior structures");
    cmd->add_option("--levels", o->levels, "distinct interior intensity levels");
    cmd->add_option("--boundary", o->boundary, "boundary ring thickness in pixels");
    cmd->add_option("--index", o->index, "corpus member to emit (members 0..index are drawn)");
    cmd->add_option("--seed", o->seed, "corpus seed (required)");
    cmd->add_option("-o,--output", o->out, "output image path (required)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_phantom_gen(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// project

struct ProjectOpts {
    GeomFlags geo;
    std::string in, out, config;
};

void run_project(const CLI::App& cmd, ProjectOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    merge_geom_flags(merge, o.geo);
    const bool have_in = merge.take("--input", o.in);
    const bool have_out = merge.take("--output", o.out);
    merge.finish();
    require_opt(have_in, "--input");
    require_opt(have_out, "--output");

    const ctfusion::Image f = ctfusion::load_image(o.in);
    const ctfusion::ScanGeometry geom = resolve_geometry(o.geo, f.size);
    const ctfusion::Sinogram g = ctfusion::RadonOperator(geom).project(f);
    require_finite(g.v, "projection");
    ctfusion::save_sinogram(o.out, g);
    std::printf("wrote %s (%d angles x %d bins, fbp_norm %.17g)\n", o.out.c_str(), geom.n_angles,
                geom.n_bins, geom.fbp_norm);
}

void setup_project(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand("project", "forward-project an image into a sinogram");
    cmd->fallthrough();
    auto o = std::make_shared<ProjectOpts>();
    cmd->add_option("--input", o->in, "input image (required)");
    cmd->add_option("-o,--output", o->out, "output sinogram path (required)");
    add_geom_flags(cmd, o->geo);
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_project(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// noise

struct NoiseOpts {
    std::string in, out, counts, config;
    double intensity = 1200.0, min_count = 60.0, scale = 0.0;
    std::uint64_t seed = 0;
};

void run_noise(const CLI::App& cmd, NoiseOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_out = merge.take("--output", o.out);
    merge.take("--counts", o.counts);
    merge.take("--intensity", o.intensity);
    merge.take("--min-count", o.min_count);
    merge.take("--scale", o.scale);
    const bool have_seed = merge.take("--seed", o.seed);
    merge.finish();
    require_opt(have_in, "--input");
    require_opt(have_out, "--output");
    require_opt(have_seed, "--seed");

    const ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
    const ctfusion::ScanProtocol protocol =
        o.scale > 0.0 ? ctfusion::ScanProtocol(o.intensity, o.min_count, o.scale)
                      : ctfusion::calibrate_scale(g, o.intensity, o.min_count);
    ctfusion::Rng rng(o.seed);
    const ctfusion::Sinogram y = ctfusion::sample_counts(ctfusion::expected_counts(g, protocol), rng);
    const ctfusion::Sinogram noisy = ctfusion::counts_to_sinogram(y, protocol);
    require_finite(noisy.v, "noisy sinogram");
    ctfusion::save_sinogram(o.out, noisy);
    if (!o.counts.empty()) {
        ctfusion::save_counts(o.counts, y);
        ctfusion::write_json_sidecar(o.counts,
                                     json{{"source_intensity", protocol.source_intensity},
                                          {"min_count_target", protocol.min_count_target},
                                          {"scale", protocol.scale}});
    }
    std::printf("scale %.17g\n", protocol.scale);
}

void setup_noise(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "noise", "simulate a photon-limited scan of a noiseless sinogram");
    cmd->fallthrough();
    auto o = std::make_shared<NoiseOpts>();
    cmd->add_option("--input", o->in, "noiseless sinogram (required)");
    cmd->add_option("-o,--output", o->out, "noisy sinogram path (required)");
    cmd->add_option("--counts", o->counts, "also write the raw photon counts here");
    cmd->add_option("--intensity", o->intensity, "unattenuated photon count per ray");
    cmd->add_option("--min-count", o->min_count, "calibration target for the weakest ray");
    cmd->add_option("--scale", o->scale,
                    "attenuation scale (default: calibrated from the input)");
    cmd->add_option("--seed", o->seed, "noise seed (required)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_noise(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// fbp

struct FbpOpts {
    std::string in, out, ref, filter = "ramlak", config;
    double p = 2.0, q = 0.0, fbp_norm = 0.0;
};

void run_fbp(const CLI::App& cmd, FbpOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_out = merge.take("--output", o.out);
    const bool have_ref = merge.take("--reference", o.ref);
    merge.take("--filter", o.filter);
    merge.take("--p", o.p);
    merge.take("--q", o.q);
    merge.take("--fbp-norm", o.fbp_norm);
    merge.finish();
    require_opt(have_in, "--input");
    if (!have_out && !have_ref)
        throw ctfusion::config_error("nothing to do: pass --output and/or --reference");
    if (o.filter != "ramlak")
        throw ctfusion::config_error("unknown filter '" + o.filter + "'");

    ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
    g.geom = with_norm(g.geom, o.fbp_norm);
    ctfusion::ProjectionFilter1D filt = ctfusion::ramlak_filter(g.geom);
    if (o.q > 0.0) filt = ctfusion::butterworth_apodize(filt, o.p, o.q);
    const ctfusion::Image f = ctfusion::fbp_reconstruct(g, filt, ctfusion::RadonOperator(g.geom));
    require_finite(f.v, "reconstruction");
    if (!o.out.empty()) ctfusion::save_image(o.out, f);
    if (!o.ref.empty())
        std::printf("snr_db %.6f\n", ctfusion::snr_db(ctfusion::load_image(o.ref), f));
}

void setup_fbp(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand("fbp", "filtered backprojection reconstruction");
    cmd->fallthrough();
    auto o = std::make_shared<FbpOpts>();
    cmd->add_option("--input", o->in, "sinogram to reconstruct (required)");
    cmd->add_option("-o,--output", o->out, "output image path");
    cmd->add_option("--reference", o->ref, "reference image; prints 'snr_db <value>'");
    cmd->add_option("--filter", o->filter, "base ramp filter (ramlak)");
    cmd->add_option("--p", o->p, "apodization order (used when --q is set)");
    cmd->add_option("--q", o->q, "apodization cutoff in cycles/unit (0: none)");
    cmd->add_option("--fbp-norm", o->fbp_norm,
                    "normalisation override (default: stored or calibrated)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_fbp(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// complete

struct CompleteOpts {
    std::string in, out, config;
    double roi = 0.0, measured = -1.0;
};

void run_complete(const CLI::App& cmd, CompleteOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_out = merge.take("--output", o.out);
    const bool have_roi = merge.take("--roi", o.roi);
    merge.take("--measured", o.measured);
    merge.finish();
    require_opt(have_in, "--input");
    require_opt(have_out, "--output");
    require_opt(have_roi, "--roi");

    const ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
    const ctfusion::RoiSpec roi(o.roi, o.measured);
    roi.check_against(g.geom);
    const ctfusion::BinRange band = ctfusion::measured_band(roi, g.geom);
    ctfusion::save_sinogram(o.out, ctfusion::complete_sinogram(g, band));
    std::printf("wrote %s (band bins %d..%d)\n", o.out.c_str(), band.lo, band.hi);
}

void setup_complete(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "complete", "extend a truncated sinogram by replicating band-edge values");
    cmd->fallthrough();
    auto o = std::make_shared<CompleteOpts>();
    cmd->add_option("--input", o->in, "truncated sinogram (required)");
    cmd->add_option("-o,--output", o->out, "completed sinogram path (required)");
    cmd->add_option("--roi", o->roi, "region-of-interest radius (required)");
    cmd->add_option("--measured", o->measured,
                    "measured-disk radius (default: 1.1x the ROI radius)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_complete(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// legone-calibrate

struct LegoneCalOpts {
    std::vector<std::string> train;
    GeomFlags geo;
    double intensity = 1200.0, min_count = 60.0, scale = 0.0;
    double p = 2.0, q_hi = 0.45, q_lo = 0.10;
    int filters = 10, instances = 16;
    std::uint64_t seed = 0;
    std::string out, config;
};

void run_legone_calibrate(const CLI::App& cmd, LegoneCalOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_train = merge.take("--train", o.train);
    merge_geom_flags(merge, o.geo);
    merge.take("--intensity", o.intensity);
    merge.take("--min-count", o.min_count);
    merge.take("--scale", o.scale);
    merge.take("--p", o.p);
    merge.take("--q-hi", o.q_hi);
    merge.take("--q-lo", o.q_lo);
    merge.take("--filters", o.filters);
    merge.take("--instances", o.instances);
    const bool have_seed = merge.take("--seed", o.seed);
    const bool have_out = merge.take("--output", o.out);
    merge.finish();
    require_opt(have_train && !o.train.empty(), "--train");
    require_opt(have_seed, "--seed");
    require_opt(have_out, "--output");

    const std::vector<ctfusion::Image> refs = load_images(o.train);
    const ctfusion::ScanGeometry geom = resolve_geometry(o.geo, refs[0].size);
    const ctfusion::RadonOperator op(geom);
    std::vector<ctfusion::Sinogram> clean;
    clean.reserve(refs.size());
    for (const auto& f : refs) clean.push_back(op.project(f));
    const ctfusion::ScanProtocol protocol =
        o.scale > 0.0 ? ctfusion::ScanProtocol(o.intensity, o.min_count, o.scale)
                      : ctfusion::calibrate_scale(clean, o.intensity, o.min_count);
    const std::vector<ctfusion::Reconstructor> bank =
        schedule_bank(geom, o.p, o.q_hi, o.q_lo, o.filters);

    const ctfusion::LegoneCalibration cal = ctfusion::calibrate_confidence(
        refs, bank, geom, protocol, o.instances, ctfusion::Rng(o.seed));

    json meta;
    meta["kappa"] = cal.params.kappa_cal;
    meta["exponent"] = cal.params.q_exp;
    meta["instances"] = cal.maps.instances;
    meta["best_train_snr_db"] = cal.best_mean_snr;
    meta["schedule"] = {{"p", o.p}, {"q_hi", o.q_hi}, {"q_lo", o.q_lo}, {"count", o.filters}};
    meta["geometry"] = {{"n_angles", geom.n_angles},
                        {"n_bins", geom.n_bins},
                        {"image_size", geom.image_size},
                        {"support_radius", geom.support_radius},
                        {"fbp_norm", geom.fbp_norm}};
    meta["protocol"] = {{"source_intensity", protocol.source_intensity},
                        {"min_count_target", protocol.min_count_target},
                        {"scale", protocol.scale}};
    json map_names = json::array(), tags = json::array();
    for (size_t i = 0; i < cal.maps.maps.size(); ++i) {
        const std::string path = o.out + ".var" + std::to_string(i) + ".img";
        ctfusion::save_image(path, cal.maps.maps[i]);
        map_names.push_back(fs::path(path).filename().string());
    }
    for (const auto& r : bank) tags.push_back(r.tag);
    meta["maps"] = map_names;
    meta["estimators"] = tags;
    ctfusion::save_bytes(o.out + ".json", meta.dump(2) + "\n");
    std::printf("kappa %.17g exponent %.17g train_snr_db %.6f\n", cal.params.kappa_cal,
                cal.params.q_exp, cal.best_mean_snr);
}

void setup_legone_calibrate(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "legone-calibrate",
        "calibrate interval-fusion confidence bounds on a training corpus");
    cmd->fallthrough();
    auto o = std::make_shared<LegoneCalOpts>();
    cmd->add_option("--train", o->train, "training reference images (required)");
    add_geom_flags(cmd, o->geo);
    cmd->add_option("--intensity", o->intensity, "unattenuated photon count per ray");
    cmd->add_option("--min-count", o->min_count, "calibration target for the weakest ray");
    cmd->add_option("--scale", o->scale,
                    "attenuation scale (default: calibrated over the corpus)");
    cmd->add_option("--p", o->p, "apodization order of the filter schedule");
    cmd->add_option("--q-hi", o->q_hi, "sharpest cutoff in the schedule");
    cmd->add_option("--q-lo", o->q_lo, "smoothest cutoff in the schedule");
    cmd->add_option("--filters", o->filters, "number of filters in the schedule");
    cmd->add_option("--instances", o->instances, "noise realisations per variance map");
    cmd->add_option("--seed", o->seed, "calibration seed (required)");
    cmd->add_option("-o,--output", o->out,
                    "output prefix (required; writes <prefix>.json and <prefix>.var<k>.img)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_legone_calibrate(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// legone

struct LegoneOpts {
    std::string in, calib, out, switch_map, ref, config;
};

void run_legone(const CLI::App& cmd, LegoneOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_cal = merge.take("--calibration", o.calib);
    const bool have_out = merge.take("--output", o.out);
    const bool have_map = merge.take("--switch-map", o.switch_map);
    const bool have_ref = merge.take("--reference", o.ref);
    merge.finish();
    require_opt(have_in, "--input");
    require_opt(have_cal, "--calibration");
    if (!have_out && !have_map && !have_ref)
        throw ctfusion::config_error(
            "nothing to do: pass --output, --switch-map, and/or --reference");

    const ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
    const json meta = json::parse(ctfusion::load_bytes(o.calib + ".json"));
    const json& jg = meta.at("geometry");
    ctfusion::ScanGeometry geom(jg.at("n_angles").get<int>(), jg.at("n_bins").get<int>(),
                                jg.at("image_size").get<int>(),
                                jg.at("support_radius").get<double>());
    geom.fbp_norm = jg.at("fbp_norm").get<double>();
    if (!geom.same_grid(g.geom))
        throw ctfusion::shape_error("calibration grid does not match the input scan");

    const json& js = meta.at("schedule");
    const std::vector<ctfusion::Reconstructor> bank =
        schedule_bank(geom, js.at("p").get<double>(), js.at("q_hi").get<double>(),
                      js.at("q_lo").get<double>(), js.at("count").get<int>());

    ctfusion::VarianceMaps maps;
    maps.instances = meta.at("instances").get<int>();
    const fs::path dir = fs::path(o.calib).parent_path();
    for (const auto& name : meta.at("maps"))
        maps.maps.push_back(ctfusion::load_image((dir / name.get<std::string>()).string()));

    ctfusion::ConfidenceParams params;
    params.kappa_cal = meta.at("kappa").get<double>();
    params.q_exp = meta.at("exponent").get<double>();
    const std::vector<ctfusion::Image> bounds = ctfusion::stochastic_bounds(maps, params);

    std::vector<ctfusion::Image> estimates;
    estimates.reserve(bank.size());
    for (const auto& r : bank) estimates.push_back(r.apply(g));
    const auto fused = ctfusion::legone_fuse(estimates, bounds);
    require_finite(fused.first.v, "fused image");

    if (!o.out.empty()) ctfusion::save_image(o.out, fused.first);
    if (!o.switch_map.empty()) ctfusion::write_pgm(o.switch_map, fused.second.indices);
    if (!o.ref.empty())
        std::printf("snr_db %.6f\n", ctfusion::snr_db(ctfusion::load_image(o.ref), fused.first));
}

void setup_legone(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "legone", "fuse a filter schedule by intersecting per-pixel confidence intervals");
    cmd->fallthrough();
    auto o = std::make_shared<LegoneOpts>();
    cmd->add_option("--input", o->in, "noisy sinogram (required)");
    cmd->add_option("--calibration", o->calib,
                    "calibration prefix written by legone-calibrate (required)");
    cmd->add_option("-o,--output", o->out, "fused image path");
    cmd->add_option("--switch-map", o->switch_map, "write the per-pixel switch map as PGM");
    cmd->add_option("--reference", o->ref, "reference image; prints 'snr_db <value>'");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_legone(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// afbp-train

struct AfbpTrainOpts {
    std::vector<std::string> train;
    GeomFlags geo;
    std::string objective = "quality";
    double roi = 0.0, measured = -1.0, sigma = 2.0;
    double intensity = 1200.0, min_count = 60.0, scale = 0.0;
    int instances = 4, segments = 5, angle_extent = 5, bins_extent = 0, image_kernel = 0;
    int cg_iters = 8, alternations = 6;
    double init_p = 2.0, init_q = 0.5;
    bool completed = false;
    std::uint64_t seed = 0;
    std::string out, config;
};

void run_afbp_train(const CLI::App& cmd, AfbpTrainOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_train = merge.take("--train", o.train);
    merge_geom_flags(merge, o.geo);
    merge.take("--objective", o.objective);
    const bool have_roi = merge.take("--roi", o.roi);
    merge.take("--measured", o.measured);
    merge.take("--sigma", o.sigma);
    merge.take("--intensity", o.intensity);
    merge.take("--min-count", o.min_count);
    merge.take("--scale", o.scale);
    merge.take("--instances", o.instances);
    merge.take("--segments", o.segments);
    merge.take("--angle-extent", o.angle_extent);
    merge.take("--bins-extent", o.bins_extent);
    merge.take("--image-kernel", o.image_kernel);
    merge.take("--cg-iters", o.cg_iters);
    merge.take("--alternations", o.alternations);
    merge.take("--init-p", o.init_p);
    merge.take("--init-q", o.init_q);
    merge.take("--completed", o.completed);
    const bool have_seed = merge.take("--seed", o.seed);
    const bool have_out = merge.take("--output", o.out);
    merge.finish();
    require_opt(have_train && !o.train.empty(), "--train");
    require_opt(have_roi, "--roi");
    require_opt(have_out, "--output");
    if (o.objective != "quality" && o.objective != "blur")
        throw ctfusion::config_error("--objective must be 'quality' or 'blur'");
    if (o.objective == "quality") require_opt(have_seed, "--seed");

    const std::vector<ctfusion::Image> refs = load_images(o.train);
    const ctfusion::ScanGeometry geom = resolve_geometry(o.geo, refs[0].size);
    const ctfusion::RoiSpec roi(o.roi, o.measured);
    roi.check_against(geom);
    const ctfusion::BinRange band = ctfusion::measured_band(roi, geom);
    const int be = o.bins_extent > 0 ? o.bins_extent : ((band.hi - band.lo + 1) | 1);
    const int ik = o.image_kernel > 0 ? o.image_kernel
                                      : ctfusion::default_image_kernel_size(geom.image_size);
    ctfusion::KernelBank init = ctfusion::make_initial_bank(
        geom, roi, o.segments, o.angle_extent, be, ik,
        ctfusion::butterworth_apodize(ctfusion::ramlak_filter(geom), o.init_p, o.init_q),
        roi.measurement_radius, o.completed);

    ctfusion::TrainingRun run;
    run.cg_iters = o.cg_iters;
    run.max_alternations = o.alternations;
    ctfusion::KernelBank bank;
    if (o.objective == "quality") {
        const ctfusion::RadonOperator op(geom);
        std::vector<ctfusion::Sinogram> clean;
        clean.reserve(refs.size());
        for (const auto& f : refs) clean.push_back(op.project(f));
        const ctfusion::ScanProtocol protocol =
            o.scale > 0.0 ? ctfusion::ScanProtocol(o.intensity, o.min_count, o.scale)
                          : ctfusion::calibrate_scale(clean, o.intensity, o.min_count);
        bank = ctfusion::train_afbp_quality(refs, roi, geom, protocol, o.instances,
                                            ctfusion::Rng(o.seed), std::move(init), run);
    } else {
        bank = ctfusion::train_afbp_blur(refs, o.sigma, roi, geom, std::move(init), run);
    }
    ctfusion::save_kernel_bank(o.out, bank);
    std::printf("tag %s objective %.17g half_steps %d\n", bank.tag.c_str(),
                run.trace.empty() ? 0.0 : run.trace.back(), run.half_steps);
}

void setup_afbp_train(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "afbp-train", "train a distance-segmented kernel bank for truncated scans");
    cmd->fallthrough();
    auto o = std::make_shared<AfbpTrainOpts>();
    cmd->add_option("--train", o->train, "training reference images (required)");
    add_geom_flags(cmd, o->geo);
    cmd->add_option("--objective", o->objective, "training target: quality or blur");
    cmd->add_option("--roi", o->roi, "region-of-interest radius (required)");
    cmd->add_option("--measured", o->measured,
                    "measured-disk radius (default: 1.1x the ROI radius)");
    cmd->add_option("--sigma", o->sigma, "target blur width (blur objective)");
    cmd->add_option("--intensity", o->intensity, "photon count per ray (quality objective)");
    cmd->add_option("--min-count", o->min_count, "weakest-ray target (quality objective)");
    cmd->add_option("--scale", o->scale,
                    "attenuation scale (default: calibrated over the corpus)");
    cmd->add_option("--instances", o->instances, "noise draws per phantom (quality objective)");
    cmd->add_option("--segments", o->segments, "number of distance segments");
    cmd->add_option("--angle-extent", o->angle_extent, "sinogram kernel extent in angles (odd)");
    cmd->add_option("--bins-extent", o->bins_extent,
                    "sinogram kernel extent in bins (odd; default: the measured band)");
    cmd->add_option("--image-kernel", o->image_kernel,
                    "image kernel size (odd; default: scaled to the grid)");
    cmd->add_option("--cg-iters", o->cg_iters, "least-squares iterations per half-step");
    cmd->add_option("--alternations", o->alternations, "alternating sweeps over the kernels");
    cmd->add_option("--init-p", o->init_p, "seed filter apodization order");
    cmd->add_option("--init-q", o->init_q, "seed filter cutoff");
    cmd->add_flag("--completed", o->completed, "train on band-completed inputs");
    cmd->add_option("--seed", o->seed, "training-noise seed (required for quality)");
    cmd->add_option("-o,--output", o->out, "output kernel bank path (required)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_afbp_train(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// afbp

struct AfbpOpts {
    std::string in, bank, out, ref, config;
    bool truncate = false;
};

void run_afbp(const CLI::App& cmd, AfbpOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_bank = merge.take("--bank", o.bank);
    const bool have_out = merge.take("--output", o.out);
    const bool have_ref = merge.take("--reference", o.ref);
    merge.take("--truncate", o.truncate);
    merge.finish();
    require_opt(have_in, "--input");
    require_opt(have_bank, "--bank");
    if (!have_out && !have_ref)
        throw ctfusion::config_error("nothing to do: pass --output and/or --reference");

    const ctfusion::KernelBank bank = ctfusion::load_kernel_bank(o.bank);
    ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
    if (o.truncate) g = ctfusion::truncate_projections(g, bank.roi);
    const ctfusion::Image f =
        ctfusion::apply_afbp(g, bank, ctfusion::RadonOperator(bank.geom));
    require_finite(f.v, "reconstruction");
    if (!o.out.empty()) ctfusion::save_image(o.out, f);
    if (!o.ref.empty()) {
        const ctfusion::Image mask = ctfusion::roi_pixel_mask(bank.roi, bank.geom);
        std::printf("snr_db %.6f\n",
                    ctfusion::snr_db(ctfusion::load_image(o.ref), f, &mask));
    }
}

void setup_afbp(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "afbp", "reconstruct a truncated scan with a trained kernel bank");
    cmd->fallthrough();
    auto o = std::make_shared<AfbpOpts>();
    cmd->add_option("--input", o->in, "truncated sinogram (required)");
    cmd->add_option("--bank", o->bank, "trained kernel bank (required)");
    cmd->add_option("-o,--output", o->out, "output image path");
    cmd->add_option("--reference", o->ref,
                    "reference image; prints ROI-masked 'snr_db <value>'");
    cmd->add_flag("--truncate", o->truncate,
                  "zero bins outside the bank's measured band first");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_afbp(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// blur-measure

struct BlurMeasureOpts {
    std::vector<std::string> transformed, refs;
    double roi = 0.0, measured = -1.0;
    std::string config;
};

void run_blur_measure(const CLI::App& cmd, BlurMeasureOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_t = merge.take("--transformed", o.transformed);
    const bool have_r = merge.take("--reference", o.refs);
    merge.take("--roi", o.roi);
    merge.take("--measured", o.measured);
    merge.finish();
    require_opt(have_t && !o.transformed.empty(), "--transformed");
    require_opt(have_r && !o.refs.empty(), "--reference");

    const std::vector<ctfusion::Image> ts = load_images(o.transformed);
    const std::vector<ctfusion::Image> rs = load_images(o.refs);
    ctfusion::Image mask;
    const bool use_mask = o.roi > 0.0;
    if (use_mask) mask = make_disk_mask(o.roi, o.measured, rs[0].size);
    const double zeta = ctfusion::blur_measure(ts, rs, use_mask ? &mask : nullptr);
    std::printf("blur_zeta %.17g\n", zeta);
}

void setup_blur_measure(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "blur-measure", "fit the equivalent Gaussian blur width of a transform's outputs");
    cmd->fallthrough();
    auto o = std::make_shared<BlurMeasureOpts>();
    cmd->add_option("--transformed", o->transformed, "transformed images (required)");
    cmd->add_option("--reference", o->refs, "matching reference images (required)");
    cmd->add_option("--roi", o->roi, "restrict the fit to a centered disk of this radius");
    cmd->add_option("--measured", o->measured, "measured-disk radius for the mask");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_blur_measure(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// nn-train

struct NnTrainOpts {
    std::vector<std::string> refs, estimates, tags;
    int stack = 0, best_index = 0, samples = 16000, neurons = 24, restarts = 3, max_iters = 500;
    double roi = 0.0, measured = -1.0;
    std::uint64_t seed = 0;
    std::string out, config;
};

void run_nn_train(const CLI::App& cmd, NnTrainOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_refs = merge.take("--ref", o.refs);
    const bool have_est = merge.take("--estimate", o.estimates);
    merge.take("--tag", o.tags);
    const bool have_stack = merge.take("--stack-size", o.stack);
    merge.take("--best-index", o.best_index);
    merge.take("--samples", o.samples);
    merge.take("--neurons", o.neurons);
    merge.take("--restarts", o.restarts);
    merge.take("--max-iters", o.max_iters);
    merge.take("--roi", o.roi);
    merge.take("--measured", o.measured);
    const bool have_seed = merge.take("--seed", o.seed);
    const bool have_out = merge.take("--output", o.out);
    merge.finish();
    require_opt(have_refs && !o.refs.empty(), "--ref");
    require_opt(have_est && !o.estimates.empty(), "--estimate");
    require_opt(have_stack, "--stack-size");
    require_opt(have_seed, "--seed");
    require_opt(have_out, "--output");
    if (o.stack < 1) throw ctfusion::config_error("--stack-size must be positive");
    if (o.estimates.size() != o.refs.size() * size_t(o.stack))
        throw ctfusion::config_error(
            "--estimate must list stack-size entries per reference, grouped by reference");

    const std::vector<ctfusion::Image> refs = load_images(o.refs);
    std::vector<std::vector<ctfusion::Image>> stacks(refs.size());
    for (size_t t = 0; t < refs.size(); ++t)
        for (int k = 0; k < o.stack; ++k)
            stacks[t].push_back(
                ctfusion::load_image(o.estimates[t * size_t(o.stack) + size_t(k)]));

    const ctfusion::FeatureLayout layout =
        ctfusion::FeatureLayout::standard(o.stack, o.best_index);
    ctfusion::Image mask;
    const bool use_mask = o.roi > 0.0;
    if (use_mask) mask = make_disk_mask(o.roi, o.measured, refs[0].size);

    ctfusion::Rng master(o.seed);
    const ctfusion::TrainingBatch batch = ctfusion::build_training_batch(
        refs, stacks, layout, o.samples, master.stream(6), use_mask ? &mask : nullptr);
    ctfusion::NetTrainConfig ncfg;
    ncfg.neurons = o.neurons;
    ncfg.restarts = o.restarts;
    ncfg.optimizer.max_iters = o.max_iters;
    const ctfusion::NetTrainResult tr = ctfusion::train_net(batch, layout, ncfg, master.stream(5));

    ctfusion::FusionNet net = tr.net;
    if (!o.tags.empty()) {
        if (int(o.tags.size()) != o.stack)
            throw ctfusion::config_error("--tag count must equal --stack-size");
        net.bank_tags = o.tags;
    } else if (net.bank_tags.empty()) {
        for (int k = 0; k < o.stack; ++k)
            net.bank_tags.push_back("estimate-" + std::to_string(k));
    }
    ctfusion::save_fusion_net(o.out, net);
    std::printf("objective %.17g best_restart %d rows %zu%s\n",
                tr.final_objectives[size_t(tr.best_restart)], tr.best_restart, batch.rows(),
                batch.clipped ? " (sampling clipped)" : "");
}

void setup_nn_train(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "nn-train", "train the residual fusion network on estimate stacks");
    cmd->fallthrough();
    auto o = std::make_shared<NnTrainOpts>();
    cmd->add_option("--ref", o->refs, "reference images (required)");
    cmd->add_option("--estimate", o->estimates,
                    "estimate images, stack-size per reference in order (required)");
    cmd->add_option("--tag", o->tags, "estimator tags to store (default: estimate-<k>)");
    cmd->add_option("--stack-size", o->stack, "estimates per reference (required)");
    cmd->add_option("--best-index", o->best_index,
                    "stack position whose neighborhood feeds the feature vector");
    cmd->add_option("--samples", o->samples, "training pixels to sample");
    cmd->add_option("--neurons", o->neurons, "hidden-layer width");
    cmd->add_option("--restarts", o->restarts, "independent training restarts");
    cmd->add_option("--max-iters", o->max_iters, "optimizer iteration cap per restart");
    cmd->add_option("--roi", o->roi, "sample only inside a centered disk of this radius");
    cmd->add_option("--measured", o->measured, "measured-disk radius for the mask");
    cmd->add_option("--seed", o->seed, "sampling/initialisation seed (required)");
    cmd->add_option("-o,--output", o->out, "output network path (required)");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_nn_train(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// spades

struct SpadesOpts {
    std::string in, net, out, ref, config;
    std::vector<std::string> estimates, banks;
    double p = 2.0, q_hi = 0.45, q_lo = 0.10, fbp_norm = 0.0;
    int filters = 10;
    double roi = 0.0, measured = -1.0;
};

void run_spades(const CLI::App& cmd, SpadesOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_net = merge.take("--net", o.net);
    const bool have_out = merge.take("--output", o.out);
    const bool have_ref = merge.take("--reference", o.ref);
    merge.take("--estimate", o.estimates);
    merge.take("--bank", o.banks);
    merge.take("--p", o.p);
    merge.take("--q-hi", o.q_hi);
    merge.take("--q-lo", o.q_lo);
    merge.take("--filters", o.filters);
    merge.take("--fbp-norm", o.fbp_norm);
    merge.take("--roi", o.roi);
    merge.take("--measured", o.measured);
    merge.finish();
    require_opt(have_net, "--net");
    if (!have_out && !have_ref)
        throw ctfusion::config_error("nothing to do: pass --output and/or --reference");
    if (!o.estimates.empty() && !o.banks.empty())
        throw ctfusion::config_error("--estimate and --bank are mutually exclusive");

    const ctfusion::FusionNet net = ctfusion::load_fusion_net(o.net);
    ctfusion::Image mask;
    const bool use_mask = o.roi > 0.0;
    ctfusion::Image fused;
    if (!o.estimates.empty()) {
        const std::vector<ctfusion::Image> est = load_images(o.estimates);
        if (use_mask) mask = make_disk_mask(o.roi, o.measured, est[0].size);
        fused = ctfusion::spades_fuse(est, net, use_mask ? &mask : nullptr);
    } else {
        require_opt(have_in, "--input");
        ctfusion::Sinogram g = ctfusion::load_sinogram(o.in);
        std::vector<ctfusion::Reconstructor> bank;
        if (!o.banks.empty()) {
            for (const auto& b : o.banks)
                bank.push_back(ctfusion::make_afbp_reconstructor(ctfusion::load_kernel_bank(b)));
        } else {
            g.geom = with_norm(g.geom, o.fbp_norm);
            bank = schedule_bank(g.geom, o.p, o.q_hi, o.q_lo, o.filters);
        }
        if (use_mask) mask = make_disk_mask(o.roi, o.measured, g.geom.image_size);
        fused = ctfusion::spades_reconstruct(g, bank, net, use_mask ? &mask : nullptr);
    }
    require_finite(fused.v, "fused image");
    if (!o.out.empty()) ctfusion::save_image(o.out, fused);
    if (!o.ref.empty())
        std::printf("snr_db %.6f\n", ctfusion::snr_db(ctfusion::load_image(o.ref), fused,
                                                      use_mask ? &mask : nullptr));
}

void setup_spades(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "spades", "fuse an estimator bank with a trained residual network");
    cmd->fallthrough();
    auto o = std::make_shared<SpadesOpts>();
    cmd->add_option("--input", o->in, "sinogram (required unless --estimate is given)");
    cmd->add_option("--net", o->net, "trained fusion network (required)");
    cmd->add_option("--estimate", o->estimates,
                    "precomputed estimate images, in the trained stack order");
    cmd->add_option("--bank", o->banks, "kernel banks forming the estimator stack");
    cmd->add_option("--p", o->p, "schedule apodization order (schedule mode)");
    cmd->add_option("--q-hi", o->q_hi, "sharpest schedule cutoff (schedule mode)");
    cmd->add_option("--q-lo", o->q_lo, "smoothest schedule cutoff (schedule mode)");
    cmd->add_option("--filters", o->filters, "schedule length (schedule mode)");
    cmd->add_option("--fbp-norm", o->fbp_norm,
                    "normalisation override (default: stored or calibrated)");
    cmd->add_option("--roi", o->roi, "fuse and score only inside this disk radius");
    cmd->add_option("--measured", o->measured, "measured-disk radius for the mask");
    cmd->add_option("-o,--output", o->out, "fused image path");
    cmd->add_option("--reference", o->ref, "reference image; prints 'snr_db <value>'");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_spades(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// pl

struct PlOpts {
    std::string in, out, ref, trace, config;
    double intensity = 1200.0, min_count = 60.0, scale = 0.0;
    double beta = 0.0, delta = 1.0, init_p = 2.0, init_q = 0.5, fbp_norm = 0.0;
    int iters = 200;
};

void run_pl(const CLI::App& cmd, PlOpts& o) {
    ConfigMerge merge(&cmd, o.config);
    const bool have_in = merge.take("--input", o.in);
    const bool have_out = merge.take("--output", o.out);
    const bool have_ref = merge.take("--reference", o.ref);
    merge.take("--trace", o.trace);
    bool have_intensity = merge.take("--intensity", o.intensity);
    bool have_min = merge.take("--min-count", o.min_count);
    bool have_scale = merge.take("--scale", o.scale);
    merge.take("--beta", o.beta);
    merge.take("--delta", o.delta);
    merge.take("--iters", o.iters);
    merge.take("--init-p", o.init_p);
    merge.take("--init-q", o.init_q);
    merge.take("--fbp-norm", o.fbp_norm);
    merge.finish();
    require_opt(have_in, "--input");
    if (!have_out && !have_ref)
        throw ctfusion::config_error("nothing to do: pass --output and/or --reference");

    // Fall back to the sidecar `noise --counts` writes next to the counts.
    if (!have_scale || !have_intensity || !have_min) {
        const std::string sidecar = o.in + ".json";
        if (fs::exists(sidecar)) {
            const json sc = json::parse(ctfusion::load_bytes(sidecar));
            if (!have_intensity && sc.contains("source_intensity"))
                o.intensity = sc.at("source_intensity").get<double>();
            if (!have_min && sc.contains("min_count_target"))
                o.min_count = sc.at("min_count_target").get<double>();
            if (!have_scale && sc.contains("scale")) {
                o.scale = sc.at("scale").get<double>();
                have_scale = true;
            }
        }
    }
    if (!have_scale || o.scale <= 0.0)
        throw ctfusion::config_error("pass --scale (no counts sidecar found beside the input)");

    ctfusion::Sinogram y = ctfusion::load_counts(o.in);
    y.geom = with_norm(y.geom, o.fbp_norm);
    const ctfusion::ScanProtocol protocol(o.intensity, o.min_count, o.scale);
    ctfusion::PLConfig cfg;
    cfg.beta = o.beta;
    cfg.delta = o.delta;
    cfg.max_iters = o.iters;
    cfg.init_p = o.init_p;
    cfg.init_q = o.init_q;
    cfg.validate();
    const ctfusion::PLResult res =
        ctfusion::pl_reconstruct(y, cfg, protocol, ctfusion::RadonOperator(y.geom));
    require_finite(res.image.v, "reconstruction");
    if (!o.out.empty()) ctfusion::save_image(o.out, res.image);
    if (!o.trace.empty()) ctfusion::save_bytes(o.trace, ctfusion::trace_to_csv(res.trace));
    if (!o.ref.empty())
        std::printf("snr_db %.6f\n", ctfusion::snr_db(ctfusion::load_image(o.ref), res.image));
    std::printf("objective %.17g iterations %d\n",
                res.trace.empty() ? 0.0 : res.trace.back(), res.iterations);
}

void setup_pl(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "pl", "penalized-likelihood reconstruction from photon counts");
    cmd->fallthrough();
    auto o = std::make_shared<PlOpts>();
    cmd->add_option("--input", o->in, "photon-count container (required)");
    cmd->add_option("-o,--output", o->out, "output image path");
    cmd->add_option("--reference", o->ref, "reference image; prints 'snr_db <value>'");
    cmd->add_option("--trace", o->trace, "write the objective trace as CSV");
    cmd->add_option("--intensity", o->intensity, "unattenuated photon count per ray");
    cmd->add_option("--min-count", o->min_count, "calibration target for the weakest ray");
    cmd->add_option("--scale", o->scale,
                    "attenuation scale (default: read from the counts sidecar)");
    cmd->add_option("--beta", o->beta, "roughness penalty weight");
    cmd->add_option("--delta", o->delta, "edge-preservation knee of the penalty");
    cmd->add_option("--iters", o->iters, "iteration cap");
    cmd->add_option("--init-p", o->init_p, "initializer filter apodization order");
    cmd->add_option("--init-q", o->init_q, "initializer filter cutoff");
    cmd->add_option("--fbp-norm", o->fbp_norm,
                    "normalisation override for the initializer");
    cmd->add_option("--config", o->config, "JSON file supplying unset flags");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_pl(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string config_path, outdir = ".";
};

void run_eval(const CLI::App& cmd, EvalOpts& o) {
    require_opt(cmd.count("--config") > 0, "--config");
    const ctfusion::ExperimentConfig cfg =
        ctfusion::ExperimentConfig::from_json(json::parse(ctfusion::load_bytes(o.config_path)));
    if (o.outdir.empty()) o.outdir = ".";
    fs::create_directories(o.outdir);
    const ctfusion::Report rep = ctfusion::run_experiment(cfg, o.outdir);
    std::fputs(rep.to_text().c_str(), stdout);
}

void setup_eval(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "eval", "run a full train/test experiment from a JSON definition");
    cmd->fallthrough();
    auto o = std::make_shared<EvalOpts>();
    cmd->add_option("--config", o->config_path, "experiment definition JSON (required)");
    cmd->add_option("-o,--output", o->outdir, "artifact directory (default: current)");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_eval(*cmd, *o); }; });
}

// ---------------------------------------------------------------------------
// curve

struct CurveOpts {
    std::string config_path, out;
};

void run_curve(const CLI::App& cmd, CurveOpts& o) {
    require_opt(cmd.count("--config") > 0, "--config");
    require_opt(cmd.count("--output") > 0, "--output");
    const ctfusion::ExperimentConfig cfg =
        ctfusion::ExperimentConfig::from_json(json::parse(ctfusion::load_bytes(o.config_path)));
    cfg.validate();
    const ctfusion::detail::ExperimentData data = ctfusion::detail::prepare_experiment_data(cfg);

    std::vector<ctfusion::CurvePoint> points;
    if (cfg.scenario == ctfusion::Scenario::full_scan) {
        const std::vector<ctfusion::Reconstructor> recs =
            ctfusion::detail::make_schedule_bank(cfg, data.geom);
        points = ctfusion::blur_quality_curve(recs, data.test_refs, data.test_clean,
                                              data.test_noisy);
    } else {
        const ctfusion::ScanGeometry& geom = data.geom;
        const ctfusion::Image roi_mask = ctfusion::roi_pixel_mask(cfg.roi, geom);
        const ctfusion::BinRange band = ctfusion::measured_band(cfg.roi, geom);
        const int be = cfg.afbp_bins_extent > 0 ? cfg.afbp_bins_extent
                                                : ((band.hi - band.lo + 1) | 1);
        const int ik = cfg.afbp_image_kernel > 0
                           ? cfg.afbp_image_kernel
                           : ctfusion::default_image_kernel_size(geom.image_size);
        auto fresh_init = [&] {
            return ctfusion::make_initial_bank(
                geom, cfg.roi, cfg.afbp_segments, cfg.afbp_angle_extent, be, ik,
                ctfusion::butterworth_apodize(ctfusion::ramlak_filter(geom), cfg.schedule_p, 0.5),
                cfg.roi.measurement_radius);
        };
        ctfusion::Rng master(cfg.noise_seed);
        std::vector<ctfusion::Reconstructor> family;
        {
            ctfusion::TrainingRun run;
            run.cg_iters = cfg.afbp_cg_iters;
            run.max_alternations = cfg.afbp_alternations;
            const ctfusion::KernelBank qbank = ctfusion::train_afbp_quality(
                data.train_refs, cfg.roi, geom, data.protocol, cfg.afbp_quality_instances,
                master.stream(4), fresh_init(), run);
            family.push_back(ctfusion::make_afbp_reconstructor(qbank));
        }
        for (const double sigma : cfg.effective_blur_sigmas()) {
            ctfusion::TrainingRun run;
            run.cg_iters = cfg.blur_cg_iters;
            run.max_alternations = cfg.blur_alternations;
            const ctfusion::KernelBank bbank = ctfusion::train_afbp_blur(
                data.train_refs, sigma, cfg.roi, geom, fresh_init(), run);
            family.push_back(ctfusion::make_afbp_reconstructor(bbank));
        }
        std::vector<ctfusion::Sinogram> trunc_clean, trunc_noisy;
        for (const auto& g : data.test_clean)
            trunc_clean.push_back(ctfusion::truncate_projections(g, cfg.roi));
        for (const auto& g : data.test_noisy)
            trunc_noisy.push_back(ctfusion::truncate_projections(g, cfg.roi));
        points = ctfusion::blur_quality_curve(family, data.test_refs, trunc_clean, trunc_noisy,
                                              &roi_mask);
    }
    ctfusion::save_bytes(o.out, ctfusion::curve_to_csv(points));
    std::printf("wrote %s (%zu estimators)\n", o.out.c_str(), points.size());
}

void setup_curve(CLI::App& app, std::function<void()>& action) {
    auto* cmd = app.add_subcommand(
        "curve", "blur/quality trade-off curve of an estimator family, as CSV");
    cmd->fallthrough();
    auto o = std::make_shared<CurveOpts>();
    cmd->add_option("--config", o->config_path, "experiment definition JSON (required)");
    cmd->add_option("-o,--output", o->out, "output CSV path (required)");
    cmd->callback([cmd, o, &action] { action = [cmd, o] { run_curve(*cmd, *o); }; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale CT simulation, reconstruction, and fusion toolkit"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads,
                   "worker threads (default: CT_SPADES_THREADS env var, else all cores)");

    std::function<void()> action;
    setup_phantom_gen(app, action);
    setup_project(app, action);
    setup_noise(app, action);
    setup_fbp(app, action);
    setup_complete(app, action);
    setup_legone_calibrate(app, action);
    setup_legone(app, action);
    setup_afbp_train(app, action);
    setup_afbp(app, action);
    setup_blur_measure(app, action);
    setup_nn_train(app, action);
    setup_spades(app, action);
    setup_pl(app, action);
    setup_eval(app, action);
    setup_curve(app, action);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        apply_threads(threads);
        if (action) action();
        return 0;
    } catch (const ctfusion::io_error& e) {
        std::fprintf(stderr, "ctfusion: io error: %s\n", e.what());
        return 3;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "ctfusion: json error: %s\n", e.what());
        return 3;
    } catch (const ctfusion::shape_error& e) {
        std::fprintf(stderr, "ctfusion: shape error: %s\n", e.what());
        return 3;
    } catch (const ctfusion::config_error& e) {
        std::fprintf(stderr, "ctfusion: usage error: %s\n", e.what());
        return 2;
    } catch (const ctfusion::range_error& e) {
        std::fprintf(stderr, "ctfusion: usage error: %s\n", e.what());
        return 2;
    } catch (const ctfusion::training_error& e) {
        std::fprintf(stderr, "ctfusion: numerical error: %s\n", e.what());
        return 4;
    } catch (const ctfusion::degenerate_error& e) {
        std::fprintf(stderr, "ctfusion: numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ctfusion: error: %s\n", e.what());
        return 4;
    }
}
