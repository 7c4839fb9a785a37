// spinrelax command line: synthesis, fitting, dead-time and symmetry queries.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "spinrelax/csv.hpp"
#include "spinrelax/deadtime.hpp"
#include "spinrelax/errors.hpp"
#include "spinrelax/group_theory.hpp"
#include "spinrelax/pipeline.hpp"
#include "spinrelax/tempfit.hpp"
#include "spinrelax/time_trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spinrelax;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return in;
}

// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

std::string with_newline(std::string s) { return s.ends_with('\n') ? s : s + '\n'; }

json temp_fit_json(const TempFit& f) {
  const auto& p = f.params;
  const auto& e = f.stderrs;
  return {{"model", "four-process"},
          {"n", p.n},
          {"c_d_hz_per_k", p.cD},
          {"c_r_hz_per_kn", p.cR},
          {"c_o_hz", p.cO},
          {"delta_mev", p.delta},
          {"gamma0_hz", p.gamma0},
          {"stderr", {{"c_d", e.cD}, {"c_r", e.cR}, {"c_o", e.cO}, {"delta_mev", e.delta}, {"gamma0", e.gamma0}}},
          {"rss", f.diagnostics.rss},
          {"converged", f.diagnostics.converged},
          {"warning", f.diagnostics.warning}};
}

json power_fit_json(const PowerLawFit& f) {
  return {{"model", "power-law"},
          {"alpha_hz_per_k", f.params.alpha},
          {"beta", f.params.beta},
          {"gamma", f.params.gamma},
          {"stderr", {{"alpha", f.stderrs.alpha}, {"beta", f.stderrs.beta}, {"gamma", f.stderrs.gamma}}},
          {"rss", f.diagnostics.rss},
          {"converged", f.diagnostics.converged},
          {"degenerate", f.diagnostics.degenerate},
          {"warning", f.diagnostics.warning}};
}

std::string rules_text(const std::vector<group::Irrep>& irreps) {
  using namespace group;
  std::ostringstream out;
  out << "irrep ";
  for (const auto& c : classes()) out << std::setw(8) << c.label;
  out << '\n';
  for (Irrep r : kAllIrreps) {
    out << std::left << std::setw(6) << name(r) << std::right;
    for (auto z : characters(r)) out << std::setw(8) << to_string(z);
    out << '\n';
  }
  out << "\nselection rules (bra* x op x ket contains A1)\n";
  for (Irrep bra : irreps)
    for (Irrep ket : irreps) {
      out << std::left << std::setw(4) << name(bra) << "<-> " << std::setw(4) << name(ket) << std::right;
      for (FieldOperator op : kAllFieldOperators) {
        const auto rule = selection_rule(bra, ket, op);
        out << "  " << name(op) << '=' << (rule.allowed ? "allowed" : "forbidden");
      }
      out << '\n';
    }
  for (KramersDoublet kd : {KramersDoublet::G56, KramersDoublet::G4}) {
    const auto prof = kd_field_profile(kd);
    out << "\ndoublet " << name(kd) << ':';
    for (const auto& resp : prof.responses)
      out << "  " << name(resp.op) << '=' << (resp.allowed ? "allowed" : "forbidden")
          << (resp.kramersForbidden && resp.allowedByCharacters ? "(kramers)" : "");
    out << (prof.gPerpendicularZero ? "  g_perp=0" : "") << '\n';
  }
  return out.str();
}

json rules_json(const std::vector<group::Irrep>& irreps) {
  using namespace group;
  json table = json::array();
  for (Irrep r : kAllIrreps) {
    json row = json::array();
    for (auto z : characters(r)) row.push_back(to_string(z));
    table.push_back({{"irrep", name(r)}, {"characters", row}});
  }
  json cls = json::array();
  for (const auto& c : classes()) cls.push_back({{"label", c.label}, {"size", c.size}});
  json rules = json::array();
  for (Irrep bra : irreps)
    for (Irrep ket : irreps)
      for (FieldOperator op : kAllFieldOperators) {
        const auto rule = selection_rule(bra, ket, op);
        rules.push_back({{"bra", name(bra)}, {"ket", name(ket)}, {"op", name(op)}, {"allowed", rule.allowed},
                         {"product", to_string(rule.product)}});
      }
  json doublets = json::array();
  for (KramersDoublet kd : {KramersDoublet::G56, KramersDoublet::G4}) {
    const auto prof = kd_field_profile(kd);
    json ops = json::object();
    for (const auto& resp : prof.responses)
      ops[std::string(name(resp.op))] = {{"allowed", resp.allowed},
                                         {"allowed_by_characters", resp.allowedByCharacters},
                                         {"kramers_forbidden", resp.kramersForbidden}};
    doublets.push_back({{"doublet", name(kd)}, {"g_perp_zero", prof.gPerpendicularZero}, {"operators", ops}});
  }
  return {{"classes", cls}, {"characters", table}, {"selection_rules", rules}, {"doublets", doublets}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinrelax: spin relaxation experiment synthesis and analysis"};
  app.set_version_flag("--version", library_version());
  app.require_subcommand(1);

  std::string out;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  auto common = [&](CLI::App* sub, std::vector<std::string> formats) {
    sub->add_option("--out,-o", out, "Output file (default stdout)");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember(formats));
  };

  // synth
  std::string configPath;
  auto* synth = app.add_subcommand("synth", "Config JSON -> traces and T1 report");
  synth->add_option("config", configPath, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--seed", seed, "Override noise seed");
  std::string traceDir;
  synth->add_option("--traces", traceDir, "Directory for per-delay trace CSVs");
  common(synth, {"json", "csv"});

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Config JSON -> population CSV");
  simulate->add_option("config", configPath, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  std::optional<double> simTau;
  simulate->add_option("--tau", simTau, "Append a dark gap of this length and P2");
  common(simulate, {"csv"});

  // fit-t1
  std::string inputPath;
  auto* fitT1 = app.add_subcommand("fit-t1", "Pulse-pair CSV -> T1 fit");
  fitT1->add_option("input", inputPath, "CSV tau_s,h1_hz,h2_hz")->required()->check(CLI::ExistingFile);
  common(fitT1, {"json", "csv"});

  // fit-temp
  auto* fitTemp = app.add_subcommand("fit-temp", "Relaxation CSV -> temperature model fits");
  fitTemp->add_option("input", inputPath, "CSV temperature_K,rate_hz[,sigma_hz]")->required()->check(CLI::ExistingFile);
  std::string nChoice = "both";
  fitTemp->add_option("--n", nChoice, "Raman exponent")->check(CLI::IsMember({"5", "9", "both"}));
  bool powerLaw = false;
  fitTemp->add_flag("--power-law", powerLaw, "Also fit alpha T + beta T^gamma");
  common(fitTemp, {"json", "csv"});

  // deadtime
  auto* deadtime = app.add_subcommand("deadtime", "Photon-rate trace -> measured-rate trace");
  deadtime->add_option("input", inputPath, "Trace CSV of photon rate (Hz)")->check(CLI::ExistingFile);
  double deadTime = 10e-6, constRate = 0.0, duration = 200e-6, binWidth = 100e-9;
  std::size_t trials = 0;
  deadtime->add_option("--dead-time", deadTime, "Detector dead time, s")->check(CLI::PositiveNumber);
  deadtime->add_option("--rate", constRate, "Constant photon rate instead of an input file, Hz");
  deadtime->add_option("--duration", duration, "Length of the constant-rate input, s");
  deadtime->add_option("--bin-width", binWidth, "Bin width of the constant-rate input, s");
  deadtime->add_option("--mc", trials, "Also run the Monte-Carlo detector with this many trials");
  deadtime->add_option("--seed", seed, "Monte-Carlo seed");
  common(deadtime, {"csv", "json"});

  // rules
  auto* rules = app.add_subcommand("rules", "Character table, products and selection rules");
  std::vector<std::string> productArgs;
  bool conjFirst = false;
  std::string bra, ket, op;
  rules->add_option("--product", productArgs, "Decompose A x B")->expected(2);
  rules->add_flag("--conj", conjFirst, "Conjugate the first factor of --product");
  rules->add_option("--bra", bra, "Selection rule query: bra irrep");
  rules->add_option("--ket", ket, "Selection rule query: ket irrep");
  rules->add_option("--op", op, "Selection rule query: E_par, E_perp, B_par, B_perp");
  rules->add_option("--out,-o", out, "Output file (default stdout)");
  std::string rulesFormat = "text";
  rules->add_option("--format", rulesFormat, "Output format")->check(CLI::IsMember({"text", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      ExperimentConfig cfg = config_from_json(read_file(configPath));
      if (seed) cfg.noise.seed = *seed;
      const Synthesis syn = synthesize(cfg);
      const RunReport report = run_t1_pipeline(cfg, syn);
      if (!traceDir.empty()) {
        fs::create_directories(traceDir);
        for (std::size_t i = 0; i < syn.traces.size(); ++i) {
          save_trace((fs::path(traceDir) / ("tau" + std::to_string(i) + "_p1.csv")).string(), syn.traces[i].first);
          save_trace((fs::path(traceDir) / ("tau" + std::to_string(i) + "_p2.csv")).string(), syn.traces[i].second);
        }
      }
      if (format == "csv") {
        std::ostringstream ss;
        write_pulse_pairs_csv(ss, report.records);
        emit(out, ss.str());
      } else {
        emit(out, with_newline(report_to_json(report)));
      }
      return report.error.empty() ? 0 : 3;
    }
    if (*simulate) {
      const ExperimentConfig cfg = config_from_json(read_file(configPath));
      std::ostringstream ss;
      write_populations_csv(ss, simulate_populations(cfg, simTau));
      emit(out, ss.str());
      return 0;
    }
    if (*fitT1) {
      auto in = open_input(inputPath);
      const auto records = read_pulse_pairs_csv(in);
      const T1FitResult fit = fit_t1(records);
      if (format == "csv") {
        emit(out, "t1_s,q,stderr_t1_s,stderr_q,rss,converged\n" + csv::format_double(fit.t1) + ',' +
                      csv::format_double(fit.q) + ',' + csv::format_double(fit.stderrT1) + ',' +
                      csv::format_double(fit.stderrQ) + ',' + csv::format_double(fit.rss) + ',' +
                      (fit.converged ? "true" : "false") + '\n');
      } else {
        emit(out, with_newline(fit_to_json(fit)));
      }
      return 0;
    }
    if (*fitTemp) {
      auto in = open_input(inputPath);
      const auto data = read_relaxation_csv(in);
      std::vector<TempFit> fits;
      if (nChoice == "both") fits = fit_temp_model_both(data);
      else fits.push_back(fit_temp_model(data, std::stoi(nChoice)));
      std::vector<ModelSummary> summaries;
      json models = json::array();
      for (const auto& f : fits) {
        summaries.push_back(summarize(f));
        models.push_back(temp_fit_json(f));
      }
      if (powerLaw) {
        const auto pl = fit_power_law(data);
        summaries.push_back(summarize(pl));
        models.push_back(power_fit_json(pl));
      }
      const auto constant = fit_constant_rate(data);
      summaries.push_back(summarize(constant));
      models.push_back({{"model", "constant"}, {"gamma0_hz", constant.gamma0}, {"rss", constant.diagnostics.rss}});
      const auto ranking = compare_models(data, summaries);
      if (format == "csv") {
        std::ostringstream ss;
        ss << "rank,model,parameters,rss,aicc\n";
        for (const auto& r : ranking)
          ss << r.rank << ',' << r.model.name << ',' << r.model.parameters << ',' << csv::format_double(r.model.rss)
             << ',' << csv::format_double(r.aicc) << '\n';
        emit(out, ss.str());
      } else {
        json rank = json::array();
        for (const auto& r : ranking)
          rank.push_back({{"rank", r.rank}, {"model", r.model.name}, {"parameters", r.model.parameters},
                          {"rss", r.model.rss}, {"aicc", r.aicc}});
        emit(out, json({{"fits", models}, {"ranking", rank}}).dump(2) + '\n');
      }
      return 0;
    }
    if (*deadtime) {
      TimeTrace photon;
      if (!inputPath.empty()) {
        photon = load_trace(inputPath);
      } else {
        if (!(constRate > 0.0)) throw UsageError("give an input trace or --rate");
        const auto n = static_cast<Eigen::Index>(std::llround(duration / binWidth));
        photon = {0.0, binWidth, Eigen::VectorXd::Constant(n, constRate), TraceUnit::RateHz};
      }
      const DetectorSpec det{deadTime};
      const TimeTrace measured = apply_dead_time(photon, det);
      std::optional<MonteCarloResult> mc;
      if (trials > 0) mc = monte_carlo_counts(photon, det, trials, seed.value_or(0));
      if (format == "json") {
        json j = {{"dead_time_s", deadTime},
                  {"t0_s", measured.t0},
                  {"bin_width_s", measured.binWidth},
                  {"steady_state_hz", steady_state_rate(photon.counts.maxCoeff(), det)},
                  {"measured_hz", std::vector<double>(measured.counts.begin(), measured.counts.end())}};
        if (mc) {
          j["mc_trials"] = trials;
          j["mc_hz"] = std::vector<double>(mc->rate.counts.begin(), mc->rate.counts.end());
          j["mc_sigma_hz"] = std::vector<double>(mc->sigma.begin(), mc->sigma.end());
        }
        emit(out, j.dump(2) + '\n');
      } else {
        std::ostringstream ss;
        ss << "t_s,photon_hz,measured_hz" << (mc ? ",mc_hz,mc_sigma_hz" : "") << '\n';
        for (Eigen::Index k = 0; k < measured.size(); ++k) {
          ss << csv::format_double(measured.time(k)) << ',' << csv::format_double(photon.counts(k)) << ','
             << csv::format_double(measured.counts(k));
          if (mc) ss << ',' << csv::format_double(mc->rate.counts(k)) << ',' << csv::format_double(mc->sigma(k));
          ss << '\n';
        }
        emit(out, ss.str());
      }
      return 0;
    }
    if (*rules) {
      using namespace group;
      if (!productArgs.empty()) {
        const Irrep a = parse_irrep(productArgs[0]), b = parse_irrep(productArgs[1]);
        const auto chars = product(a, conjFirst, b);
        const auto d = decompose(chars);
        const std::string label = std::string(name(a)) + (conjFirst ? "*" : "") + " x " + std::string(name(b));
        if (rulesFormat == "json") {
          json c = json::array();
          for (auto z : chars) c.push_back(to_string(z));
          emit(out, json({{"product", label}, {"characters", c}, {"decomposition", to_string(d)}}).dump(2) + '\n');
        } else {
          emit(out, label + " = " + to_string(d) + '\n');
        }
        return 0;
      }
      if (!bra.empty() || !ket.empty() || !op.empty()) {
        if (bra.empty() || ket.empty() || op.empty()) throw UsageError("--bra, --ket and --op go together");
        const auto rule = selection_rule(parse_irrep(bra), parse_irrep(ket), parse_field_operator(op));
        if (rulesFormat == "json") {
          emit(out, json({{"bra", name(rule.bra)}, {"ket", name(rule.ket)}, {"op", name(rule.op)},
                          {"allowed", rule.allowed}, {"product", to_string(rule.product)}})
                            .dump(2) + '\n');
        } else {
          emit(out, std::string(rule.allowed ? "allowed" : "forbidden") + " (" + to_string(rule.product) + ")\n");
        }
        return 0;
      }
      const std::vector<Irrep> doubles{Irrep::G4, Irrep::G5, Irrep::G6};
      emit(out, rulesFormat == "json" ? rules_json(doubles).dump(2) + '\n' : rules_text(doubles));
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
