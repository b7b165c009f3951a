// Acceptance gate: one checkable claim per criterion, selected by argv[1].
// Prints exactly one [PASS]/[FAIL] line with the measured numbers and exits
// 0/1, so the surrounding test harness can track each claim separately.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "ctfusion/eval.hpp"
#include "helpers.hpp"

using namespace ctfusion;

namespace {

struct Outcome {
    bool pass = false;
    std::string what;
    std::string measured;
};

std::string strf(const char* fmt, ...) {
    char buf[768];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool nonincreasing(const std::vector<double>& trace, double& worst_uphill) {
    for (size_t i = 1; i < trace.size(); ++i) {
        const double uphill = trace[i] - trace[i - 1];
        worst_uphill = std::max(worst_uphill, uphill);
        if (uphill > 1e-9 * std::max(1.0, std::fabs(trace[i - 1]))) return false;
    }
    return true;
}

// ---- 1: projector adjoint identity -----------------------------------------

Outcome criterion_1() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        ScanGeometry g(20 + (i * 7) % 41, 33 + 2 * ((i * 5) % 16), 32, 16.0);
        RadonOperator op(g);
        const Image f = testutil::random_image(32, Rng(1000 + uint64_t(i)), -1.0, 1.0);
        const Sinogram s = testutil::random_sinogram(g, Rng(2000 + uint64_t(i)), -1.0, 1.0);
        const double lhs = testutil::dot(op.project(f).v, s.v);
        const double rhs = testutil::dot(f.v, op.backproject(s).v);
        const double rel = std::fabs(lhs - rhs) / std::max({std::fabs(lhs), std::fabs(rhs), 1e-30});
        worst = std::max(worst, rel);
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.what = "forward/back projection adjoint identity on 20 random 32x32 instances";
    o.pass = worst <= 1e-9 && secs < 5.0;
    o.measured = strf("worst relative mismatch %.3e (need <= 1e-9); runtime %.2fs (budget 5s)",
                      worst, secs);
    return o;
}

// ---- 2: photon-count sampler moments ----------------------------------------

Outcome criterion_2() {
    const auto t0 = Clock::now();
    const int n = 100000;
    bool ok = true;
    std::string detail;
    Rng rng(555);
    for (double lambda : {5.0, 60.0, 500.0}) {
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = double(poisson_sample(lambda, rng));
            sum += x;
            sumsq += x * x;
        }
        const double mean = sum / n;
        const double var = (sumsq - n * mean * mean) / (n - 1);
        const double z_mean = std::fabs(mean - lambda) / std::sqrt(lambda / n);
        const double z_var =
            std::fabs(var - lambda) / std::sqrt((lambda + 2.0 * lambda * lambda) / n);
        ok = ok && z_mean <= 3.0 && z_var <= 3.0;
        detail += strf("%slambda %g: mean z=%.2f, var z=%.2f", detail.empty() ? "" : "; ",
                       lambda, z_mean, z_var);
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.what = "count sampler mean/variance within 3 sigma at 1e5 draws";
    o.pass = ok && secs < 10.0;
    o.measured = detail + strf("; runtime %.2fs (budget 10s)", secs);
    return o;
}

// ---- 3: switch rule equivalence + 1-D error bound ---------------------------

Outcome criterion_3() {
    // Part A: the incremental running intersection must match a brute-force
    // prefix intersection exactly, stack by stack.
    int stacks = 0, mismatches = 0;
    Rng rng(99);
    for (int round = 0; round < 100; ++round) {
        Rng r = rng.stream(uint64_t(round));
        const size_t depth = 1 + size_t(r.next_below(8));
        const int size = 10;
        std::vector<Image> est(depth, Image(size)), rho(depth, Image(size));
        for (size_t i = 0; i < depth; ++i)
            for (size_t p = 0; p < est[i].v.size(); ++p) {
                est[i].v[p] = r.uniform(-5.0, 5.0);
                rho[i].v[p] = r.uniform(0.0, 1.5);
            }
        const auto [fused, sw] = legone_fuse(est, rho);
        for (size_t p = 0; p < fused.v.size(); ++p) {
            ++stacks;
            // From-scratch oracle: the chosen prefix is the longest one whose
            // intervals, recomputed wholesale, still share a point.
            size_t chosen = 0;
            for (size_t k = 1; k <= depth; ++k) {
                double lo = -1e300, hi = 1e300;
                for (size_t i = 0; i < k; ++i) {
                    lo = std::max(lo, est[i].v[p] - 2.0 * rho[i].v[p]);
                    hi = std::min(hi, est[i].v[p] + 2.0 * rho[i].v[p]);
                }
                if (k > 1 && lo > hi) break;
                chosen = k - 1;
            }
            if (fused.v[p] != est[chosen].v[p] || sw.indices.v[p] != double(chosen + 1))
                ++mismatches;
        }
    }

    // Part B: on piecewise-constant 1-D signals the window-mean switch output
    // must stay within 6x its own chosen-scale bound almost always.
    const std::vector<int> radii{1, 2, 4, 8, 16, 32, 64};
    const int n = 301, trials = 1000;
    const double sigma = 0.3;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        Rng r = Rng(4242).stream(uint64_t(t));
        const int jump = 40 + int(r.next_below(221));
        const double a = r.uniform(0.5, 2.0);
        const double b = a + (r.next_below(2) ? 1.0 : -1.0) * r.uniform(0.5, 2.5);
        std::vector<double> truth(n), y(n);
        for (int i = 0; i < n; ++i) {
            truth[size_t(i)] = i < jump ? a : b;
            y[size_t(i)] = truth[size_t(i)] + sigma * r.next_normal();
        }
        const Denoise1dResult res = legone_denoise_1d(y, radii, sigma);
        const int x = int(r.next_below(uint64_t(n)));
        const int rad = radii[size_t(res.switch_index[size_t(x)] - 1)];
        const int w = std::min(n - 1, x + rad) - std::max(0, x - rad) + 1;
        const double rho = 2.0 * sigma / std::sqrt(double(w));
        if (std::fabs(res.output[size_t(x)] - truth[size_t(x)]) <= 6.0 * rho) ++hits;
    }

    Outcome o;
    o.what = "interval switch rule: brute-force equivalence and 1-D error bound";
    o.pass = mismatches == 0 && hits >= 950;
    o.measured = strf("%d/%d stacks exact; bound held in %d/%d trials (need >= 950)",
                      stacks - mismatches, stacks, hits, trials);
    return o;
}

// ---- 4: confidence fusion gain over the best apodized filter ---------------

Outcome criterion_4() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.methods = {"fbp", "legone"};
    const Report rep = run_experiment(cfg);
    const double fbp = rep.method("fbp").mean;
    const double fused = rep.method("legone").mean;
    const double secs = seconds_since(t0);
    Outcome o;
    o.what = "confidence fusion beats the best apodized filter by 0.1 dB on held-out scans";
    o.pass = fused >= fbp + 0.1 && secs < 180.0;
    o.measured = strf("best filter %.3f dB, fused %.3f dB, gain %+.3f dB (need >= +0.100); "
                      "runtime %.1fs (budget 180s)",
                      fbp, fused, fused - fbp, secs);
    return o;
}

// ---- 5: full-scan network fusion gain ---------------------------------------

Outcome criterion_5() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.methods = {"fbp", "spades"};
    const Report rep = run_experiment(cfg);
    const double fbp = rep.method("fbp").mean;
    const double fused = rep.method("spades").mean;
    const double secs = seconds_since(t0);
    Outcome o;
    o.what = "full-scan network fusion beats the best linear method by 1.0 dB";
    o.pass = fused >= fbp + 1.0 && secs < 600.0;
    o.measured = strf("best linear %.3f dB, fused %.3f dB, gain %+.3f dB (need >= +1.000); "
                      "runtime %.1fs (budget 600s)",
                      fbp, fused, fused - fbp, secs);
    return o;
}

// ---- 6: truncated-scan ordering ----------------------------------------------

Outcome criterion_6() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.scenario = Scenario::roi;
    cfg.methods = {"fbp-trunc", "fbp-full", "afbp"};
    const Report rep = run_experiment(cfg);
    const double trunc = rep.method("fbp-trunc").mean;
    const double full = rep.method("fbp-full").mean;
    const double afbp = rep.method("afbp").mean;
    const double secs = seconds_since(t0);
    Outcome o;
    o.what = "trained bank beats truncated filtering by 1.5 dB and tracks full-data filtering";
    o.pass = (afbp - trunc >= 1.5) && (std::fabs(afbp - full) <= 1.5) && secs < 900.0;
    o.measured = strf("fbp-trunc %.3f, fbp-full %.3f, afbp %.3f dB; gap %+.3f (need >= +1.5), "
                      "full-data offset %+.3f (need |.| <= 1.5); runtime %.1fs (budget 900s)",
                      trunc, full, afbp, afbp - trunc, afbp - full, secs);
    return o;
}

// ---- 7: truncated-scan network fusion ordering -------------------------------

Outcome criterion_7() {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::roi;
    const Report rep = run_experiment(cfg);
    const double trunc = rep.method("fbp-trunc").mean;
    const double full = rep.method("fbp-full").mean;
    const double afbp = rep.method("afbp").mean;
    const double fused = rep.method("spades").mean;
    Outcome o;
    o.what = "roi method ordering: truncated < full-data <~ trained bank < network fusion";
    o.pass = trunc < full && afbp >= full - 0.5 && fused - afbp >= 0.5;
    o.measured = strf("fbp-trunc %.3f < fbp-full %.3f <~ afbp %.3f < spades %.3f dB; "
                      "fusion gain over bank %+.3f (need >= +0.5)",
                      trunc, full, afbp, fused, fused - afbp);
    return o;
}

// ---- shared roi setup for the width criteria ---------------------------------

struct RoiParts {
    ExperimentConfig cfg;
    detail::ExperimentData data;
    Image roi_mask;
    BinRange band;
};

RoiParts make_roi_parts() {
    RoiParts parts;
    parts.cfg.scenario = Scenario::roi;
    parts.data = detail::prepare_experiment_data(parts.cfg);
    parts.roi_mask = roi_pixel_mask(parts.cfg.roi, parts.data.geom);
    parts.band = measured_band(parts.cfg.roi, parts.data.geom);
    return parts;
}

KernelBank fresh_bank(const RoiParts& parts) {
    const ExperimentConfig& cfg = parts.cfg;
    const ScanGeometry& geom = parts.data.geom;
    const int be = (parts.band.hi - parts.band.lo + 1) | 1;
    return make_initial_bank(geom, cfg.roi, cfg.afbp_segments, cfg.afbp_angle_extent, be,
                             default_image_kernel_size(geom.image_size),
                             butterworth_apodize(ramlak_filter(geom), cfg.schedule_p, 0.5),
                             cfg.roi.measurement_radius);
}

// ---- 8: target-width recovery + schedule monotonicity ------------------------

Outcome criterion_8() {
    RoiParts parts = make_roi_parts();
    const ScanGeometry& geom = parts.data.geom;

    // A bank trained toward a width-2 Gaussian should measure near width 2 on
    // held-out phantoms.
    TrainingRun run;
    run.cg_iters = parts.cfg.blur_cg_iters;
    run.max_alternations = parts.cfg.blur_alternations;
    const KernelBank bank =
        train_afbp_blur(parts.data.train_refs, 2.0, parts.cfg.roi, geom, fresh_bank(parts), run);
    const Reconstructor rec = make_afbp_reconstructor(bank);
    std::vector<Image> outputs;
    for (const Sinogram& g : parts.data.test_clean)
        outputs.push_back(rec.apply(truncate_projections(g, parts.cfg.roi)));
    const double zeta = blur_measure(outputs, parts.data.test_refs, &parts.roi_mask);

    // The blur measure must grow strictly along the apodization schedule.
    const CutoffSchedule sched =
        CutoffSchedule::decreasing(parts.cfg.schedule_p, parts.cfg.schedule_q_hi,
                                   parts.cfg.schedule_q_lo, parts.cfg.schedule_count);
    bool increasing = true;
    double prev = -1.0;
    std::string zs;
    for (const auto& e : sched.entries) {
        const Reconstructor f =
            make_fbp_reconstructor(geom, butterworth_apodize(ramlak_filter(geom), e.p, e.q));
        std::vector<Image> outs;
        for (const Sinogram& g : parts.data.test_clean) outs.push_back(f.apply(g));
        const double z = blur_measure(outs, parts.data.test_refs);
        increasing = increasing && z > prev;
        prev = z;
        zs += strf("%s%.2f", zs.empty() ? "" : ",", z);
    }

    Outcome o;
    o.what = "width-2 target bank measures in [1.7, 2.3]; schedule widths strictly increase";
    o.pass = zeta >= 1.7 && zeta <= 2.3 && increasing;
    o.measured = strf("trained-bank width %.3f; schedule widths [%s] %s", zeta, zs.c_str(),
                      increasing ? "strictly increasing" : "NOT increasing");
    return o;
}

// ---- 9: peak-quality width ordering -------------------------------------------

Outcome criterion_9() {
    RoiParts parts = make_roi_parts();
    const ExperimentConfig& cfg = parts.cfg;
    const ScanGeometry& geom = parts.data.geom;
    const Rng master(cfg.noise_seed);

    std::vector<Sinogram> clean_trunc, noisy_trunc;
    for (const Sinogram& g : parts.data.test_clean)
        clean_trunc.push_back(truncate_projections(g, cfg.roi));
    for (const Sinogram& g : parts.data.test_noisy)
        noisy_trunc.push_back(truncate_projections(g, cfg.roi));

    // Trained-bank family: the fidelity-trained bank plus the width ladder.
    std::vector<Reconstructor> bank_recs;
    {
        TrainingRun run;
        run.cg_iters = cfg.afbp_cg_iters;
        run.max_alternations = cfg.afbp_alternations;
        bank_recs.push_back(make_afbp_reconstructor(
            train_afbp_quality(parts.data.train_refs, cfg.roi, geom, parts.data.protocol,
                               cfg.afbp_quality_instances, master.stream(4), fresh_bank(parts),
                               run)));
    }
    for (double s : cfg.effective_blur_sigmas()) {
        TrainingRun run;
        run.cg_iters = cfg.blur_cg_iters;
        run.max_alternations = cfg.blur_alternations;
        bank_recs.push_back(make_afbp_reconstructor(
            train_afbp_blur(parts.data.train_refs, s, cfg.roi, geom, fresh_bank(parts), run)));
    }
    const auto bank_curve =
        blur_quality_curve(bank_recs, parts.data.test_refs, clean_trunc, noisy_trunc,
                           &parts.roi_mask);

    // Shallow-filter family on band-completed data.
    std::vector<Reconstructor> fbp_recs;
    for (const auto& e : CutoffSchedule::decreasing(0.5, 0.45, 0.08, 10).entries)
        fbp_recs.push_back(make_fbp_completed_reconstructor(
            geom, butterworth_apodize(ramlak_filter(geom), e.p, e.q), cfg.roi));
    const auto fbp_curve =
        blur_quality_curve(fbp_recs, parts.data.test_refs, clean_trunc, noisy_trunc,
                           &parts.roi_mask);

    auto peak_zeta = [](const std::vector<CurvePoint>& pts) {
        double best_snr = -1e300, z = 0.0;
        for (const auto& p : pts)
            if (p.mean_snr > best_snr) {
                best_snr = p.mean_snr;
                z = p.zeta;
            }
        return z;
    };
    const double bank_peak = peak_zeta(bank_curve);
    const double fbp_peak = peak_zeta(fbp_curve);

    Outcome o;
    o.what = "trained banks peak at a smaller width than shallow filtering";
    o.pass = bank_peak < fbp_peak;
    o.measured = strf("bank-family peak width %.3f vs shallow-filter peak width %.3f "
                      "(need bank < filter)",
                      bank_peak, fbp_peak);
    return o;
}

// ---- 10: training-trace monotonicity ------------------------------------------

Outcome criterion_10() {
    double worst_uphill = -1e300;
    bool ok = true;

    // Alternating kernel training, fidelity and width objectives.
    {
        ScanGeometry geom = calibrate_fbp_norm(ScanGeometry(40, 41, 32, 16.0));
        const RoiSpec roi(8.0);
        PhantomConfig pc;
        pc.image_size = 32;
        pc.min_inner = 3;
        pc.max_inner = 6;
        pc.seed = 51;
        const std::vector<Image> refs = make_corpus(pc, 2);
        RadonOperator op(geom);
        std::vector<Sinogram> clean;
        for (const Image& f : refs) clean.push_back(op.project(f));
        const ScanProtocol protocol = calibrate_scale(clean, 1200.0, 60.0);
        const BinRange band = measured_band(roi, geom);
        const int be = (band.hi - band.lo + 1) | 1;
        const ProjectionFilter1D filt = butterworth_apodize(ramlak_filter(geom), 2.0, 0.5);
        auto init = [&] {
            return make_initial_bank(geom, roi, 3, 3, be, 5, filt, roi.measurement_radius);
        };

        TrainingRun quality_run;
        quality_run.cg_iters = 4;
        quality_run.max_alternations = 3;
        train_afbp_quality(refs, roi, geom, protocol, 3, Rng(777).stream(4), init(),
                           quality_run);
        ok = ok && nonincreasing(quality_run.trace, worst_uphill);

        TrainingRun blur_run;
        blur_run.cg_iters = 4;
        blur_run.max_alternations = 3;
        train_afbp_blur(refs, 1.0, roi, geom, init(), blur_run);
        ok = ok && nonincreasing(blur_run.trace, worst_uphill);
    }

    // Network training, every restart.
    {
        std::vector<Image> refs{testutil::random_image(16, Rng(31), 0.2, 1.0),
                                testutil::random_image(16, Rng(32), 0.2, 1.0)};
        std::vector<std::vector<Image>> stacks;
        for (size_t t = 0; t < refs.size(); ++t) {
            Rng r(500 + t);
            Image a = refs[t], b = refs[t];
            for (size_t p = 0; p < a.v.size(); ++p) {
                a.v[p] += 0.05 * r.next_normal();
                b.v[p] += 0.20 * r.next_normal();
            }
            stacks.push_back({a, b});
        }
        const FeatureLayout layout = FeatureLayout::standard(2, 0);
        const TrainingBatch batch =
            build_training_batch(refs, stacks, layout, 400, Rng(777).stream(6));
        NetTrainConfig ncfg;
        ncfg.neurons = 6;
        ncfg.restarts = 3;
        ncfg.optimizer.max_iters = 80;
        const NetTrainResult tn = train_net(batch, layout, ncfg, Rng(777).stream(5));
        for (const auto& trace : tn.traces) ok = ok && nonincreasing(trace, worst_uphill);
    }

    // Penalized-likelihood descent.
    {
        ScanGeometry geom = calibrate_fbp_norm(ScanGeometry(40, 41, 32, 16.0));
        PhantomConfig pc;
        pc.image_size = 32;
        pc.min_inner = 3;
        pc.max_inner = 6;
        pc.seed = 61;
        const Image ref = make_corpus(pc, 1)[0];
        RadonOperator op(geom);
        const Sinogram clean = op.project(ref);
        const ScanProtocol protocol = calibrate_scale({clean}, 1200.0, 60.0);
        const Sinogram counts = sample_counts(expected_counts(clean, protocol), Rng(99));
        PLConfig cfg;
        cfg.beta = 0.3;
        cfg.delta = 0.05;
        cfg.max_iters = 30;
        const PLResult res = pl_reconstruct(counts, cfg, protocol, op);
        ok = ok && nonincreasing(res.trace, worst_uphill);
    }

    Outcome o;
    o.what = "every training trace (kernel bank, network restarts, likelihood descent) descends";
    o.pass = ok;
    o.measured = strf("worst uphill step %+.3e (need <= 0 within tolerance)", worst_uphill);
    return o;
}

// ---- 11: gradients against central differences --------------------------------

Outcome criterion_11() {
    // Network objective.
    double worst_nn = 0.0;
    {
        const int K = FeatureLayout::standard(3, 0).feature_count();  // 12
        const int N = 5;
        const size_t T = 40;
        Rng rx(11), rt(12), rw(13);
        std::vector<double> xnorm(T * size_t(K)), tnorm(T);
        for (auto& v : xnorm) v = rx.uniform(0.0, 1.0);
        for (auto& v : tnorm) v = rt.uniform(0.0, 1.0);
        std::vector<double> theta(size_t(K + 1) * N + size_t(N));
        for (auto& v : theta) v = rw.uniform(-0.6, 0.6);

        std::vector<double> grad;
        detail::nn_objective_gradient(theta, grad, K, N, xnorm, tnorm);
        const double h = 1e-6;
        for (size_t c = 0; c < theta.size(); ++c) {
            std::vector<double> tp = theta, tm = theta, scratch;
            tp[c] += h;
            tm[c] -= h;
            const double op = detail::nn_objective_gradient(tp, scratch, K, N, xnorm, tnorm);
            const double om = detail::nn_objective_gradient(tm, scratch, K, N, xnorm, tnorm);
            const double fd = (op - om) / (2.0 * h);
            worst_nn = std::max(worst_nn,
                                std::fabs(grad[c] - fd) / std::max(1e-6, std::fabs(fd)));
        }
    }

    // Penalized-likelihood objective.
    double worst_pl = 0.0;
    {
        ScanGeometry geom(12, 17, 12, 6.0);
        RadonOperator op(geom);
        const Image f = testutil::random_image(12, Rng(71), 0.1, 1.0);
        const ScanProtocol protocol = calibrate_scale({op.project(f)}, 400.0, 40.0);
        const Sinogram y = sample_counts(expected_counts(op.project(f), protocol), Rng(21));
        const double beta = 0.2, delta = 0.1;
        const Image grad = pl_gradient(f, y, protocol, beta, delta, op);
        const double h = 1e-6;
        Rng pick(31);
        for (int probe = 0; probe < 20; ++probe) {
            const size_t p = size_t(pick.next_below(f.v.size()));
            Image fp = f, fm = f;
            fp.v[p] += h;
            fm.v[p] -= h;
            const double fd = (pl_objective(fp, y, protocol, beta, delta, op) -
                               pl_objective(fm, y, protocol, beta, delta, op)) /
                              (2.0 * h);
            worst_pl = std::max(worst_pl,
                                std::fabs(grad.v[p] - fd) / std::max(1e-6, std::fabs(fd)));
        }
    }

    Outcome o;
    o.what = "analytic gradients match central differences";
    o.pass = worst_nn <= 1e-5 && worst_pl <= 1e-4;
    o.measured = strf("network worst rel %.3e (need <= 1e-5); likelihood worst rel %.3e "
                      "(need <= 1e-4)",
                      worst_nn, worst_pl);
    return o;
}

// ---- 12: thread-count invariance ----------------------------------------------

Outcome criterion_12() {
    ExperimentConfig cfg;
    cfg.geom = ScanGeometry(40, 41, 32, 16.0);
    cfg.geom.fbp_norm = 0.0;
    cfg.train_count = 3;
    cfg.test_count = 2;
    cfg.schedule_count = 4;
    cfg.legone_instances = 4;
    cfg.nn_neurons = 8;
    cfg.nn_restarts = 2;
    cfg.nn_max_iters = 50;
    cfg.nn_samples = 2000;
    cfg.pl.beta = 0.3;
    cfg.pl.delta = 0.05;
    cfg.pl.max_iters = 8;
    cfg.methods = {"fbp", "legone", "spades", "pl"};

    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "ctfusion_acceptance_threads";
    const fs::path dir1 = base / "t1", dir4 = base / "t4";
    fs::create_directories(dir1);
    fs::create_directories(dir4);

    par::set_thread_count(1);
    const Report rep1 = run_experiment(cfg, dir1.string());
    par::set_thread_count(4);
    const Report rep4 = run_experiment(cfg, dir4.string());
    par::set_thread_count(0);  // back to single; harness decides its own width

    const std::string dump1 = rep1.to_json().dump(2);
    const std::string dump4 = rep4.to_json().dump(2);
    const std::string file1 = load_bytes((dir1 / "report.json").string());
    const std::string file4 = load_bytes((dir4 / "report.json").string());

    Outcome o;
    o.what = "reports are byte-identical across thread counts";
    o.pass = dump1 == dump4 && file1 == file4;
    o.measured = strf("1-thread report %zu bytes, 4-thread report %zu bytes, %s", file1.size(),
                      file4.size(), o.pass ? "identical" : "DIFFERENT");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <criterion number 1-12>\n", argv[0]);
        return 2;
    }
    const int n = std::atoi(argv[1]);
    Outcome o;
    switch (n) {
        case 1: o = criterion_1(); break;
        case 2: o = criterion_2(); break;
        case 3: o = criterion_3(); break;
        case 4: o = criterion_4(); break;
        case 5: o = criterion_5(); break;
        case 6: o = criterion_6(); break;
        case 7: o = criterion_7(); break;
        case 8: o = criterion_8(); break;
        case 9: o = criterion_9(); break;
        case 10: o = criterion_10(); break;
        case 11: o = criterion_11(); break;
        case 12: o = criterion_12(); break;
        default:
            std::fprintf(stderr, "unknown criterion %d (valid: 1-12)\n", n);
            return 2;
    }
    std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", n, o.what.c_str(),
                o.measured.c_str());
    return o.pass ? 0 : 1;
}
