// exrange: batch front end for extremal-range analysis of gridded field stacks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exrange/exrange.hpp"

namespace fs = std::filesystem;
using namespace exrange;

namespace {

constexpr int kUsageExit = 2;

// "0.85:0.98:0.01" (inclusive) or "0.9,0.95".
std::vector<double> parse_levels(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double a, b, step;
    char c1, c2;
    std::istringstream in(spec);
    if (!(in >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0))
      throw ValidationError("level range must look like start:stop:step");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long k = 0; k <= n; ++k) out.push_back(std::round((a + static_cast<double>(k) * step) * 1e12) / 1e12);
  } else {
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ValidationError("cannot parse number '" + tok + "'");
      }
    }
  }
  return out;
}

std::vector<double> parse_probability_levels(const std::string& spec) {
  auto v = parse_levels(spec);
  if (v.empty()) throw ValidationError("no levels given");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0 && v[i] < 1.0)) throw ValidationError("levels must lie in (0,1)");
    if (i > 0 && !(v[i] > v[i - 1])) throw ValidationError("levels must be strictly increasing");
  }
  return v;
}

std::vector<double> parse_radii(const std::string& spec) {
  auto v = parse_levels(spec);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) throw ValidationError("radii must be positive");
    if (i > 0 && !(v[i] > v[i - 1])) throw ValidationError("radii must be strictly increasing");
  }
  return v;
}

std::vector<PixelOffset> parse_lags(const std::string& spec) {
  std::vector<PixelOffset> out;
  std::istringstream in(spec);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw ValidationError("lags must look like dx:dy,dx:dy");
    try {
      out.push_back({std::stol(tok.substr(0, colon)), std::stol(tok.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ValidationError("cannot parse lag '" + tok + "'");
    }
  }
  if (out.empty()) throw ValidationError("no lags given");
  return out;
}

std::vector<int> read_blocks(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<int> b;
  int v;
  while (in >> v) b.push_back(v);
  if (!in.eof()) throw FormatError("block file must contain integers only: " + path.string());
  return b;
}

fs::path stack_path(const std::string& in) {
  fs::path p(in);
  if (fs::is_directory(p)) return p / "field.bin";
  return p;
}

std::string level_tag(double p) { return format_real(p); }

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create output directory " + d.string());
}

// Map file plus its CSV export; nodata outside the domain and on unfitted pixels.
void emit_map(const fs::path& dir, const std::string& name, const RealGrid& grid, const RasterStack& stack) {
  const auto domain = stack.domain();
  const auto clean = with_nodata(grid, domain, stack.nodata());
  save_map(dir / (name + ".bin"), clean, MapMeta{stack.dx(), stack.nodata(), stack.unit()});
  write_file_atomic(dir / (name + ".csv"), map_csv(clean, domain));
}

BoundaryPolicy parse_policy(const std::string& s) {
  return s == "fill-exceed" ? BoundaryPolicy::FillExceed : BoundaryPolicy::Erode;
}

struct Common {
  std::string in;
  std::string out = ".";
  int threads = 0;
  std::string policy = "erode";
  bool edge_fallback = false;
  std::string threshold = "pixel";

  ChainOptions chain() const {
    ChainOptions c;
    c.policy = parse_policy(policy);
    c.fallback = edge_fallback ? EdgeFallback::GridEdge : EdgeFallback::None;
    c.threshold = threshold == "pooled" ? ThresholdMode::Pooled : ThresholdMode::PerPixel;
    return c;
  }
};

void add_input(CLI::App* app, Common& c) {
  app->add_option("--in", c.in, "Input stack: data file (sidecar alongside) or directory holding field.bin")->required();
  app->add_option("--out", c.out, "Output directory");
}
void add_chain_flags(CLI::App* app, Common& c) {
  app->add_option("--policy", c.policy, "Out-of-domain pixels: erode or fill-exceed")
      ->check(CLI::IsMember({"erode", "fill-exceed"}));
  app->add_flag("--edge-fallback", c.edge_fallback, "Treat the area beyond the grid as non-exceedance");
  app->add_option("--threshold", c.threshold, "Threshold estimator: pixel (per-pixel quantile) or pooled")
      ->check(CLI::IsMember({"pixel", "pooled"}));
}

struct FitFlags {
  std::string fit = "pixel";
  std::string knots = "8x8";
  std::string penalty = "auto";
  std::size_t iters = 300;
  double min_range = 0.0;

  void add(CLI::App* app) {
    app->add_option("--fit", fit, "pixel or spline")->check(CLI::IsMember({"pixel", "spline"}));
    app->add_option("--knots", knots, "Spline basis size per axis, e.g. 8x8");
    app->add_option("--penalty", penalty, "Roughness penalty or 'auto' for block cross-validation");
    app->add_option("--iters", iters, "Optimiser iteration budget for spline fits");
    app->add_option("--min-range", min_range, "Drop ranges below this value from the regression");
  }

  void apply(ChainOptions& c) const {
    c.fit = fit == "spline" ? FitMode::Spline : FitMode::PerPixel;
    c.min_range = min_range;
    const auto xpos = knots.find('x');
    if (xpos == std::string::npos) throw ValidationError("knots must look like 8x8");
    try {
      c.spline.knots_x = std::stoul(knots.substr(0, xpos));
      c.spline.knots_y = std::stoul(knots.substr(xpos + 1));
    } catch (const std::exception&) {
      throw ValidationError("knots must look like 8x8");
    }
    if (penalty == "auto") {
      c.spline.penalty = -1.0;
    } else {
      try {
        c.spline.penalty = std::stod(penalty);
      } catch (const std::exception&) {
        throw ValidationError("penalty must be a number or 'auto'");
      }
      if (c.spline.penalty < 0.0) throw ValidationError("penalty must be non-negative");
    }
    c.spline.iters = iters;
  }
};

void write_mer(const fs::path& dir, const MerSurface& surf, const RasterStack& stack, std::span<const double> predict) {
  emit_map(dir, "mer_beta", surf.beta, stack);
  emit_map(dir, "mer_theta", surf.theta, stack);
  for (double p : predict) emit_map(dir, "mer_pred_p" + level_tag(p), predict_mer_map(surf, p), stack);
}

void write_jackknife(const fs::path& dir, const MerJackknife& jk, const RasterStack& stack) {
  emit_map(dir, "se_beta", jk.se_beta, stack);
  emit_map(dir, "se_theta", jk.se_theta, stack);
  RealGrid flag(stack.nx(), stack.ny());
  for (std::size_t i = 0; i < flag.size(); ++i) flag[i] = jk.theta_all_positive[i];
  emit_map(dir, "theta_all_positive", flag, stack);
}

// theta map from per-pixel medians at two levels.
RealGrid theta_map(const RasterStack& stack, const ChainOptions& c, double p1, double p2) {
  const std::array<double, 2> lv{p1, p2};
  const auto thr = thresholds_for(stack, lv, c.threshold);
  const auto domain = stack.domain();
  const auto m1 = pixel_median_range(range_fields(stack, thr[0], c.policy, c.fallback), domain);
  const auto m2 = pixel_median_range(range_fields(stack, thr[1], c.policy, c.fallback), domain);
  RealGrid out(stack.nx(), stack.ny(), std::nan(""));
  for (std::size_t i = 0; i < out.size(); ++i)
    if (domain.inside[i]) out[i] = theta_hat(m1[i], m2[i], p1, p2);
  return out;
}

std::vector<double> default_radii(const RasterStack& stack) {
  const double rmax = inradius(stack.domain(), stack.dx());
  std::vector<double> r;
  for (int k = 1; k <= 10; ++k) {
    const double v = k * stack.dx();
    if (v < rmax) r.push_back(v);
  }
  return r;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Extremal range of threshold exceedances on gridded fields"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: EXRANGE_THREADS or all cores)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a Matérn Gaussian or scale-mixture field stack");
  std::string model = "gaussian", sim_out;
  GaussianSimConfig gcfg;
  double a_mix = 1.0;
  sim->add_option("--model", model)->check(CLI::IsMember({"gaussian", "admix"}));
  sim->add_option("--nu", gcfg.nu);
  sim->add_option("--ell", gcfg.ell);
  sim->add_option("--n", gcfg.n_slices);
  sim->add_option("--nx", gcfg.nx);
  sim->add_option("--ny", gcfg.ny);
  sim->add_option("--dx", gcfg.dx);
  sim->add_option("--seed", gcfg.seed);
  sim->add_option("--a-mix", a_mix, "Pareto index of the per-slice scale factor");
  sim->add_option("--out", sim_out)->required();

  Common c;
  std::string levels_spec = "0.85:0.98:0.01";
  std::string radii_spec;
  std::string lags_spec = "1:0,2:0,4:0,8:0";
  double p_level = 0.9, p1 = 0.9, p2 = 0.98;
  std::string slices_spec;
  double bin_width = 1.0;
  std::size_t n_bins = 50;
  bool per_pixel_chi = false;
  std::string predict_spec = "0.989";
  std::string blocks_file;
  std::size_t n_blocks = 0;
  FitFlags fit;

  auto* q = app.add_subcommand("quantiles", "Per-pixel threshold maps");
  add_input(q, c);
  q->add_option("--p", levels_spec, "Levels: comma list or start:stop:step");
  q->add_option("--threshold", c.threshold)->check(CLI::IsMember({"pixel", "pooled"}));

  auto* exc = app.add_subcommand("excursion", "Excursion masks per slice");
  add_input(exc, c);
  add_chain_flags(exc, c);
  exc->add_option("--p", levels_spec, "Levels");
  exc->add_option("--slices", slices_spec, "Comma list of slice indices (default all)");

  auto* rng = app.add_subcommand("range", "Extremal-range fields per slice and level");
  add_input(rng, c);
  add_chain_flags(rng, c);
  rng->add_option("--p", levels_spec, "Levels");
  rng->add_option("--slices", slices_spec, "Comma list of slice indices (default all)");

  auto* cdf = app.add_subcommand("cdf", "Empirical CDF of the extremal range");
  add_input(cdf, c);
  add_chain_flags(cdf, c);
  cdf->add_option("--p", p_level, "Level");
  cdf->add_option("--radii", radii_spec, "Radii: comma list or start:stop:step (default 1..10 dx)");

  auto* hist = app.add_subcommand("hist", "Histogram of positive extremal ranges");
  add_input(hist, c);
  add_chain_flags(hist, c);
  hist->add_option("--p", levels_spec, "Levels");
  hist->add_option("--bin-width", bin_width);
  hist->add_option("--bins", n_bins);

  auto* chi = app.add_subcommand("chi", "Tail dependence coefficient at pixel lags");
  add_input(chi, c);
  chi->add_option("--p", p_level, "Level");
  chi->add_option("--lags", lags_spec, "Lags dx:dy,...");
  chi->add_option("--threshold", c.threshold)->check(CLI::IsMember({"pixel", "pooled"}));
  chi->add_flag("--per-pixel", per_pixel_chi, "Also write a per-pixel chi map per lag");

  auto* iv = app.add_subcommand("ivdens", "Curvature densities of excursion sets");
  add_input(iv, c);
  iv->add_option("--p", levels_spec, "Levels");
  iv->add_option("--threshold", c.threshold)->check(CLI::IsMember({"pixel", "pooled"}));

  auto* th = app.add_subcommand("theta", "Two-level tail decay rate map");
  add_input(th, c);
  add_chain_flags(th, c);
  th->add_option("--p1", p1);
  th->add_option("--p2", p2);

  auto* mer = app.add_subcommand("mer", "Median extremal range regression");
  add_input(mer, c);
  add_chain_flags(mer, c);
  mer->add_option("--levels", levels_spec, "Levels");
  mer->add_option("--predict-p", predict_spec, "Levels at which to predict MER maps");
  fit.add(mer);

  auto* jk = app.add_subcommand("jackknife", "Block-jackknife standard errors of the MER fit");
  add_input(jk, c);
  add_chain_flags(jk, c);
  jk->add_option("--levels", levels_spec, "Levels");
  auto* bf = jk->add_option("--blocks-by", blocks_file, "File with one block id per slice");
  auto* nb = jk->add_option("--n-blocks", n_blocks, "Contiguous blocks of slices");
  bf->excludes(nb);
  fit.add(jk);

  auto* pipe = app.add_subcommand("pipeline", "Full chain from thresholds to MER maps");
  add_input(pipe, c);
  add_chain_flags(pipe, c);
  pipe->add_option("--levels", levels_spec, "Levels");
  pipe->add_option("--radii", radii_spec, "CDF radii");
  pipe->add_option("--predict-p", predict_spec, "Levels at which to predict MER maps");
  pipe->add_option("--bin-width", bin_width);
  pipe->add_option("--bins", n_bins);
  auto* pbf = pipe->add_option("--blocks-by", blocks_file, "File with one block id per slice");
  auto* pnb = pipe->add_option("--n-blocks", n_blocks, "Contiguous blocks of slices for the jackknife");
  pbf->excludes(pnb);
  fit.add(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    std::cerr << "exrange: error kind=usage: " << e.what() << "\n";
    return kUsageExit;
  }

  if (threads > 0) set_threads(threads);

  if (sim->parsed()) {
    const fs::path dir(sim_out);
    ensure_dir(dir);
    RasterStack stack;
    if (model == "gaussian") {
      stack = simulate_gaussian(gcfg);
    } else {
      AdSimConfig ad{gcfg, a_mix};
      stack = simulate_ad_field(ad);
    }
    save_stack(dir / "field.bin", stack);
    return 0;
  }

  const fs::path out(c.out);
  ensure_dir(out);
  const auto stack = load_stack(stack_path(c.in));
  const auto domain = stack.domain();
  auto chain = c.chain();

  auto selected_slices = [&] {
    std::vector<std::size_t> s;
    if (slices_spec.empty()) {
      for (std::size_t t = 0; t < stack.nt(); ++t) s.push_back(t);
    } else {
      for (double v : parse_levels(slices_spec)) {
        if (v < 0 || v >= static_cast<double>(stack.nt()) || v != std::floor(v))
          throw ValidationError("slice index out of range");
        s.push_back(static_cast<std::size_t>(v));
      }
    }
    return s;
  };

  if (q->parsed()) {
    const auto levels = parse_probability_levels(levels_spec);
    for (const auto& f : thresholds_for(stack, levels, chain.threshold))
      emit_map(out, "quantile_p" + level_tag(f.p), f.u, stack);
  } else if (exc->parsed() || rng->parsed()) {
    const auto levels = parse_probability_levels(levels_spec);
    const auto slices = selected_slices();
    const auto thr = thresholds_for(stack, levels, chain.threshold);
    for (const auto& f : thr) {
      for (auto t : slices) {
        const auto mask = excursion_mask(stack, t, f, chain.policy);
        const std::string tag = "p" + level_tag(f.p) + "_t" + std::to_string(t);
        if (exc->parsed()) {
          RealGrid g(stack.nx(), stack.ny());
          for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask.exceed[i];
          emit_map(out, "excursion_" + tag, g, stack);
        } else {
          const RealGrid r = count_true(mask.exceed) == 0 ? RealGrid(stack.nx(), stack.ny(), 0.0)
                                                          : range_field(mask, stack.dx(), chain.fallback).r;
          emit_map(out, "range_" + tag, r, stack);
        }
      }
    }
  } else if (cdf->parsed()) {
    check_level(p_level);
    const auto radii = radii_spec.empty() ? default_radii(stack) : parse_radii(radii_spec);
    const auto thr = thresholds_for(stack, std::span<const double>(&p_level, 1), chain.threshold);
    const auto fields = range_fields(stack, thr[0], chain.policy, chain.fallback);
    const auto est = ecdf(fields, domain, radii, stack.dx());
    CsvWriter csv("r", "F", "n_exceed");
    for (std::size_t k = 0; k < est.radii.size(); ++k) csv.row(est.radii[k], est.F[k], est.n_exceed[k]);
    csv.save(out / "cdf.csv");
  } else if (hist->parsed()) {
    const auto levels = parse_probability_levels(levels_spec);
    const auto thr = thresholds_for(stack, levels, chain.threshold);
    CsvWriter csv("p", "bin_lo", "bin_hi", "count");
    for (const auto& f : thr) {
      const auto fields = range_fields(stack, f, chain.policy, chain.fallback);
      for (const auto& b : range_histogram(fields, domain, bin_width, n_bins)) csv.row(f.p, b.lo, b.hi, b.count);
    }
    csv.save(out / "hist.csv");
  } else if (chi->parsed()) {
    check_level(p_level);
    const auto lags = parse_lags(lags_spec);
    const auto thr = thresholds_for(stack, std::span<const double>(&p_level, 1), chain.threshold);
    CsvWriter csv("lag_x", "lag_y", "chi");
    for (const auto& lag : lags) {
      csv.row(lag.dx, lag.dy, tail_dependence(stack, thr[0], lag).chi);
      if (per_pixel_chi)
        emit_map(out, "chi_" + std::to_string(lag.dx) + "_" + std::to_string(lag.dy),
                 tail_dependence_map(stack, thr[0], lag), stack);
    }
    csv.save(out / "chi.csv");
  } else if (iv->parsed()) {
    const auto levels = parse_probability_levels(levels_spec);
    CsvWriter csv("p", "c0", "c1", "c2", "slope_pred");
    for (const auto& f : thresholds_for(stack, levels, chain.threshold)) {
      const auto d = estimate_densities(stack, f);
      csv.row(f.p, d.c0, d.c1, d.c2, d.c2 > 0.0 ? cdf_slope(d.c1, d.c2) : std::nan(""));
    }
    csv.save(out / "ivdens.csv");
  } else if (th->parsed()) {
    emit_map(out, "theta_map", theta_map(stack, chain, p1, p2), stack);
  } else if (mer->parsed()) {
    chain.levels = parse_probability_levels(levels_spec);
    fit.apply(chain);
    const auto predict = parse_probability_levels(predict_spec);
    write_mer(out, fit_mer(stack, chain), stack, predict);
  } else if (jk->parsed()) {
    chain.levels = parse_probability_levels(levels_spec);
    fit.apply(chain);
    std::vector<int> blocks;
    if (!blocks_file.empty())
      blocks = read_blocks(blocks_file);
    else if (n_blocks > 0)
      blocks = contiguous_blocks(stack.nt(), n_blocks);
    else
      throw ValidationError("jackknife needs --blocks-by or --n-blocks");
    write_jackknife(out, jackknife_mer(stack, blocks, chain), stack);
  } else if (pipe->parsed()) {
    chain.levels = parse_probability_levels(levels_spec);
    fit.apply(chain);
    const auto predict = parse_probability_levels(predict_spec);
    const auto radii = radii_spec.empty() ? default_radii(stack) : parse_radii(radii_spec);
    const auto thr = thresholds_for(stack, chain.levels, chain.threshold);

    CsvWriter cdf_csv("p", "r", "F", "n_exceed");
    CsvWriter med_csv("p", "median_range");
    CsvWriter hist_csv("p", "bin_lo", "bin_hi", "count");
    CsvWriter iv_csv("p", "c0", "c1", "c2", "slope_pred");
    for (const auto& f : thr) {
      const auto fields = range_fields(stack, f, chain.policy, chain.fallback);
      if (!radii.empty()) {
        const auto est = ecdf(fields, domain, radii, stack.dx());
        for (std::size_t k = 0; k < est.radii.size(); ++k) cdf_csv.row(f.p, est.radii[k], est.F[k], est.n_exceed[k]);
      }
      med_csv.row(f.p, pooled_median_range(fields, domain));
      for (const auto& b : range_histogram(fields, domain, bin_width, n_bins)) hist_csv.row(f.p, b.lo, b.hi, b.count);
      const auto d = estimate_densities(stack, f);
      iv_csv.row(f.p, d.c0, d.c1, d.c2, d.c2 > 0.0 ? cdf_slope(d.c1, d.c2) : std::nan(""));
    }
    cdf_csv.save(out / "cdf.csv");
    med_csv.save(out / "medians.csv");
    hist_csv.save(out / "hist.csv");
    iv_csv.save(out / "ivdens.csv");
    emit_map(out, "theta_map", theta_map(stack, chain, chain.levels.front(), chain.levels.back()), stack);
    write_mer(out, fit_mer(stack, chain), stack, predict);

    std::vector<int> blocks;
    if (!blocks_file.empty())
      blocks = read_blocks(blocks_file);
    else if (n_blocks > 0)
      blocks = contiguous_blocks(stack.nt(), n_blocks);
    if (!blocks.empty()) write_jackknife(out, jackknife_mer(stack, blocks, chain), stack);
  }
  return 0;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const exrange::Error& e) {
    std::cerr << "exrange: error kind=" << kind_name(e.kind()) << ": " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "exrange: error kind=internal: " << e.what() << "\n";
    return 1;
  }
}
