// Command-line front end: simulate datasets from the two built-in state
// processes, fit them by batch EM, exact online EM or SMC online EM, score
// estimates against a dataset's generating parameters, and export basis
// trajectories for plotting.

#include <streamnmf/streamnmf.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace streamnmf;

namespace {

fs::path resolve_manifest_path(const fs::path& data) {
    if (fs::is_directory(data)) return data / "manifest.txt";
    return data;
}

Matrix default_true_B(Eigen::Index m, Eigen::Index k, std::uint64_t seed) {
    Rng rng(seed ^ 0xd1b54a32d192ed03ULL);
    std::uniform_real_distribution<double> uni(0.5, 2.0);
    Matrix b(m, k);
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < k; ++c) b(r, c) = uni(rng);
    return b;
}

EmOptions parse_estimate(const std::string& which) {
    if (which == "B") return {true, false};
    if (which == "psi") return {false, true};
    if (which == "both") return {true, true};
    throw CLI::ValidationError("--estimate", "must be one of B|psi|both");
}

struct SimulateArgs {
    std::string model = "basis";
    long m = 8;
    long k = 5;
    long t = 0;
    std::uint64_t seed = 0;
    double p = 0.8571;
    double q = 0.6926;
    double alpha = 0.95;
    bool dump_latents = false;
    std::string out;
};

int run_simulate(const SimulateArgs& args) {
    const fs::path dir(args.out);
    const Matrix b_true = default_true_B(args.m, args.k, args.seed);
    if (args.model == "basis") {
        BasisSelectionModel model(static_cast<int>(args.k));
        Theta<BasisSelectionModel> theta{b_true, {args.p, args.q}};
        simulate_dataset(model, theta, args.t, args.seed, dir, args.dump_latents);
    } else if (args.model == "relaxed") {
        RelaxedBasisModel model(static_cast<int>(args.k));
        Theta<RelaxedBasisModel> theta{b_true, {args.alpha}};
        simulate_dataset(model, theta, args.t, args.seed, dir, args.dump_latents);
    } else {
        throw CLI::ValidationError("--model", "must be basis or relaxed");
    }
    std::cout << "simulate: wrote " << (dir / "manifest.txt").string() << " (" << args.model
              << ", " << args.m << "x" << args.t << ")\n";
    return 0;
}

struct FitArgs {
    std::string data;
    std::string out;
    std::string engine = "exact";
    std::string estimate = "B";
    long particles = 1000;
    double step_exponent = 0.8;
    long burn_in = 100;
    long trace_every = 100;
    std::uint64_t seed = 0;
    long iters = 50;
    double tol = 1e-8;
    std::string resample = "always"; // always | ess | never
    double ess_threshold = 0.5;
    bool n2_backward = false;
    // optional explicit psi start (overrides the manifest truth / defaults)
    std::optional<double> p, q, alpha;
};

template <StateProcess P>
InitOverrides<P> make_init(const FitArgs& args, const DatasetManifest& man, const EmOptions& em);

template <>
InitOverrides<BasisSelectionModel> make_init(const FitArgs& args, const DatasetManifest& man,
                                             const EmOptions& em) {
    InitOverrides<BasisSelectionModel> init;
    if (!em.estimate_B) init.B = man.true_B;
    if (!em.estimate_psi) init.psi = man.basis_psi.value(); // frozen at the generating value
    if (args.p || args.q) {
        BasisSelectionParams psi = init.psi.value_or(BasisSelectionParams{});
        if (args.p) psi.p = *args.p;
        if (args.q) psi.q = *args.q;
        init.psi = psi;
    }
    return init;
}

template <>
InitOverrides<RelaxedBasisModel> make_init(const FitArgs& args, const DatasetManifest& man,
                                           const EmOptions& em) {
    InitOverrides<RelaxedBasisModel> init;
    if (!em.estimate_B) init.B = man.true_B;
    if (!em.estimate_psi) init.psi = man.relaxed_psi.value();
    if (args.alpha) init.psi = RelaxedParams{*args.alpha};
    return init;
}

SmcOptions smc_options(const FitArgs& args) {
    SmcOptions smc;
    if (args.resample == "always") {
        smc.resample_every_step = true;
    } else if (args.resample == "ess") {
        smc.resample_every_step = false;
        smc.ess_threshold = args.ess_threshold;
    } else if (args.resample == "never") {
        smc.resample_every_step = false;
        smc.ess_threshold = 0.0;
    } else {
        throw CLI::ValidationError("--resample", "must be always|ess|never");
    }
    smc.use_backward_kernel = args.n2_backward;
    return smc;
}

template <StateProcess P>
int fit_online_model(const P& model, const FitArgs& args, const DatasetManifest& man,
                     const fs::path& manifest_path) {
    OnlineRunConfig config;
    config.engine = args.engine == "smc" ? InferenceEngine::smc : InferenceEngine::exact;
    config.schedule = StepSizeSchedule(args.step_exponent);
    config.burn_in = args.burn_in;
    config.particles = static_cast<int>(args.particles);
    config.seed = args.seed;
    config.estimate = parse_estimate(args.estimate);
    config.trace_every = args.trace_every;
    config.smc = smc_options(args);

    FileObservationSource stream(manifest_path.parent_path() / man.observations_file,
                                 ObservationFormat::csv, man.m);
    InitOverrides<P> init = make_init<P>(args, man, config.estimate);
    EstimateTrace<P> trace = run_online(model, man.m, stream, config, std::move(init));

    const fs::path dir(args.out);
    fs::create_directories(dir);
    write_trace_csv(dir / "trace.csv", trace);
    save_estimate(dir / "estimate.params", model, trace.back().theta, trace.back().t);
    std::cout << "fit-online: engine=" << args.engine << " steps=" << trace.back().t
              << " wrote " << (dir / "trace.csv").string() << "\n";
    return 0;
}

int run_fit_online(const FitArgs& args) {
    const fs::path manifest_path = resolve_manifest_path(args.data);
    const DatasetManifest man = load_manifest(manifest_path);
    if (args.engine != "exact" && args.engine != "smc")
        throw CLI::ValidationError("--engine", "must be exact or smc");
    if (man.model == "basis") {
        BasisSelectionModel model(man.k);
        return fit_online_model(model, args, man, manifest_path);
    }
    RelaxedBasisModel model(man.k);
    if (args.engine == "exact")
        throw std::invalid_argument("the exact engine requires the finite basis model");
    return fit_online_model(model, args, man, manifest_path);
}

int run_fit_batch(const FitArgs& args) {
    const fs::path manifest_path = resolve_manifest_path(args.data);
    const DatasetManifest man = load_manifest(manifest_path);
    if (man.model != "basis")
        throw std::invalid_argument("fit-batch requires the finite basis model");
    BasisSelectionModel model(man.k);

    std::vector<Vector> ys;
    FileObservationSource stream(manifest_path.parent_path() / man.observations_file,
                                 ObservationFormat::csv, man.m);
    while (auto y = stream.next()) ys.push_back(std::move(*y));

    BatchRunConfig config;
    config.iters = args.iters;
    config.tol = args.tol;
    config.seed = args.seed;
    config.estimate = parse_estimate(args.estimate);
    InitOverrides<BasisSelectionModel> init =
        make_init<BasisSelectionModel>(args, man, config.estimate);
    EstimateTrace<BasisSelectionModel> trace = run_batch(model, man.m, ys, config, std::move(init));

    const fs::path dir(args.out);
    fs::create_directories(dir);
    write_trace_csv(dir / "trace.csv", trace);
    {
        std::ofstream loglik(dir / "loglik.csv", std::ios::trunc);
        loglik << "iter,loglik\n";
        for (const auto& entry : trace)
            if (entry.loglik) loglik << entry.t << ',' << format_double(*entry.loglik) << '\n';
    }
    save_estimate(dir / "estimate.params", model, trace.back().theta, trace.back().t);
    std::cout << "fit-batch: iterations=" << trace.back().t << " wrote "
              << (dir / "trace.csv").string() << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string estimate;
    std::string manifest;
    std::string out;
};

int run_evaluate(const EvaluateArgs& args) {
    const EstimateFile est = load_estimate(args.estimate);
    const DatasetManifest man = load_manifest(resolve_manifest_path(args.manifest));
    if (est.B.rows() != man.true_B.rows() || est.B.cols() != man.true_B.cols())
        throw data_error("estimate and manifest dimensions do not match");
    const AlignmentReport report = align_columns(est.B, man.true_B);

    std::cout << "evaluate: permutation =";
    for (int idx : report.permutation) std::cout << ' ' << idx + 1;
    std::cout << "\n  max_abs_error  = " << report.max_abs
              << "\n  mean_abs_error = " << report.mean_abs
              << "\n  max_rel_error  = " << report.max_rel
              << "\n  mean_rel_error = " << report.mean_rel << "\n";

    if (!args.out.empty()) {
        std::vector<std::pair<std::string, std::string>> kv;
        std::string perm;
        for (int idx : report.permutation) {
            if (!perm.empty()) perm += ',';
            perm += std::to_string(idx + 1);
        }
        kv.emplace_back("permutation", perm);
        kv.emplace_back("max_abs_error", format_double(report.max_abs));
        kv.emplace_back("mean_abs_error", format_double(report.mean_abs));
        kv.emplace_back("max_rel_error", format_double(report.max_rel));
        kv.emplace_back("mean_rel_error", format_double(report.mean_rel));
        write_kv_file(args.out, kv);
    }
    return 0;
}

struct ExportArgs {
    std::string trace;
    std::string out;
};

int run_trace_export(const ExportArgs& args) {
    const TraceTable table = read_trace_csv(args.trace);
    write_trace_table(args.out, export_basis_trajectory(table));
    std::cout << "trace-export: wrote " << args.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming NMF estimation for Poisson count data"};
    app.require_subcommand(1);

    SimulateArgs sim;
    FitArgs fit;
    EvaluateArgs eval;
    ExportArgs exp;

    CLI::App* simulate = app.add_subcommand("simulate", "simulate a dataset to a directory");
    simulate->set_config("--config", "", "flat key = value defaults file");
    simulate->add_option("--model", sim.model, "state process: basis|relaxed");
    simulate->add_option("--m", sim.m, "observation rows")->check(CLI::PositiveNumber);
    simulate->add_option("--k", sim.k, "hidden dimension")->check(CLI::PositiveNumber);
    simulate->add_option("--t", sim.t, "number of time steps")->required();
    simulate->add_option("--seed", sim.seed, "RNG seed");
    simulate->add_option("--p", sim.p, "stay probability of state 0 (basis model)");
    simulate->add_option("--q", sim.q, "stay probability of state 1 (basis model)");
    simulate->add_option("--alpha", sim.alpha, "persistence parameter (relaxed model)");
    simulate->add_flag("--dump-latents", sim.dump_latents, "also write the hidden states");
    simulate->add_option("--out", sim.out, "output directory")->required();

    auto optional_double = [](std::optional<double>& slot) {
        return [&slot](const CLI::results_t& res) {
            try {
                slot = std::stod(res.at(0));
                return true;
            } catch (const std::exception&) {
                return false;
            }
        };
    };

    auto add_fit_common = [&](CLI::App* cmd) {
        cmd->set_config("--config", "", "flat key = value defaults file");
        cmd->add_option("--data", fit.data, "dataset directory or manifest path")->required();
        cmd->add_option("--seed", fit.seed, "RNG seed");
        cmd->add_option("--estimate", fit.estimate, "which parameters to estimate: B|psi|both");
        cmd->add_option("--out", fit.out, "output directory")->required();
        cmd->add_option("--p", optional_double(fit.p), "initial / frozen p (basis model)");
        cmd->add_option("--q", optional_double(fit.q), "initial / frozen q (basis model)");
        cmd->add_option("--alpha", optional_double(fit.alpha),
                        "initial / frozen alpha (relaxed model)");
    };

    CLI::App* fit_online = app.add_subcommand("fit-online", "single-pass online EM");
    add_fit_common(fit_online);
    fit_online->add_option("--engine", fit.engine, "exact|smc");
    fit_online->add_option("--particles", fit.particles, "SMC particle count")
        ->check(CLI::PositiveNumber);
    fit_online->add_option("--step-exponent", fit.step_exponent,
                           "step size gamma_t = t^-a, a in (0.5, 1]");
    fit_online->add_option("--burn-in", fit.burn_in, "steps before the first M-step")
        ->check(CLI::PositiveNumber);
    fit_online->add_option("--trace-every", fit.trace_every, "snapshot period")
        ->check(CLI::PositiveNumber);
    fit_online->add_option("--resample", fit.resample, "always|ess|never");
    fit_online->add_option("--ess-threshold", fit.ess_threshold,
                           "resample when ESS < threshold * N (with --resample ess)");
    fit_online->add_flag("--n2-backward", fit.n2_backward,
                         "use the O(N^2) backward-kernel functional estimator");

    CLI::App* fit_batch = app.add_subcommand("fit-batch", "full-data EM iterations");
    add_fit_common(fit_batch);
    fit_batch->add_option("--iters", fit.iters, "maximum EM iterations");
    fit_batch->add_option("--tol", fit.tol, "stop when |delta loglik| <= tol");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score an estimate against a manifest");
    evaluate->add_option("--estimate", eval.estimate, "estimate.params path")->required();
    evaluate->add_option("--manifest", eval.manifest, "dataset directory or manifest path")
        ->required();
    evaluate->add_option("--out", eval.out, "write the alignment report here");

    CLI::App* trace_export = app.add_subcommand("trace-export", "basis trajectories for plotting");
    trace_export->add_option("--trace", exp.trace, "trace.csv path")->required();
    trace_export->add_option("--out", exp.out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (simulate->parsed()) return run_simulate(sim);
        if (fit_online->parsed()) return run_fit_online(fit);
        if (fit_batch->parsed()) return run_fit_batch(fit);
        if (evaluate->parsed()) return run_evaluate(eval);
        if (trace_export->parsed()) return run_trace_export(exp);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
