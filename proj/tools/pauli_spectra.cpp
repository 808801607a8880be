// pauli-spectra: command line front end for the scans and exports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pauli/harness.hpp"

using nlohmann::json;
using namespace pauli;

namespace {

json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json(j, out);
}

int cmd_nu(const json& cfg, std::optional<double> b, std::optional<double> lambda, std::optional<std::string> variant,
           const std::string& out) {
  double bb = b ? *b : cfg.at("b").get<double>();
  double ll = lambda ? *lambda : cfg.at("lambda").get<double>();
  std::string v = variant ? *variant : cfg.value("variant", std::string("raw"));
  json j = {{"value", landau::nu(bb, ll, landau::parse_variant(v))}};
  emit(j, out);
  return 0;
}

int cmd_potential(const json& cfg, const std::string& out) {
  ScalarField2D B = field_from_json(cfg.at("field"));
  int N_r = cfg.value("N_r", 64), N_theta = cfg.value("N_theta", 64);
  auto sol = solve_scalar_potential(B, N_r, N_theta, {});
  // --out names the summary when it ends in .json, otherwise a prefix for all three files
  std::string base = out.empty() ? std::string("potential") : out;
  std::string summary_path = base + "_summary.json";
  if (std::filesystem::path(base).extension() == ".json") {
    summary_path = base;
    base = std::filesystem::path(base).replace_extension().string();
  }
  Table phi, h;
  phi.columns = {"r", "theta", "phi"};
  for (int i = 0; i <= sol.N_r; ++i)
    for (int k = 0; k < sol.N_theta; ++k) phi.add({sol.r[i], sol.theta[k], sol.phi(i, k)});
  h.columns = {"theta", "h"};
  for (int k = 0; k < sol.N_theta; ++k) h.add({sol.theta[k], sol.h_boundary[k]});
  write_csv(phi, base + "_phi.csv");
  write_csv(h, base + "_h.csv");
  json summary = {{"metadata", metadata(cfg)}, {"kappa", sol.kappa}, {"flux", sol.flux_B},
                  {"flux_h", sol.flux_h}, {"residual", sol.residual}, {"h_positive", sol.h_positive}};
  write_json(summary, summary_path);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_count(const json& cfg, const std::string& out) {
  ScalarField2D B = field_from_json(cfg.at("field"));
  Domain dom = cfg.contains("domain") ? domain_from_json(cfg["domain"]) : Domain::unit_square();
  double t = cfg.at("t").get<double>();
  int n = cfg.value("n", 64);
  PauliMethod method = parse_method(cfg.value("method", std::string("lichnerowicz")));
  std::vector<double> lambdas;
  if (cfg.contains("lambdas")) lambdas = cfg["lambdas"].get<std::vector<double>>();
  else lambdas.push_back(cfg.at("lambda").get<double>());

  auto [o, s] = dom.bbox();
  if (auto w = detail::adequacy_warning(t, field_sup_on(B, dom), s / n)) std::cerr << "warning: " << *w << "\n";
  auto op = assemble_pauli(dom, symmetric_gauge_for(B, dom), B, t, n, method);
  json counts = json::array();
  for (double lam : lambdas) {
    auto r = count_below(op, lam);
    counts.push_back({{"lambda", lam}, {"count", r.count}, {"shift_perturbed", r.shift_perturbed}});
  }
  json j = {{"metadata", metadata(cfg)}, {"t", t}, {"n", n}, {"dimension", op.dimension}, {"counts", counts}};
  if (cfg.contains("tiling_k")) j["tiling"] = build_tiling(B, dom, cfg["tiling_k"].get<int>()).to_json();
  if (cfg.contains("matrix_out")) write_matrix_market(op, cfg["matrix_out"].get<std::string>());
  emit(j, out);
  return 0;
}

int cmd_weyl(const json& cfg, const std::string& out) {
  auto sc = ScanConfig::from_json(cfg);
  auto res = weyl_scan(sc);
  if (out.empty()) std::cout << table_json(res.table, cfg).dump(2) << "\n";
  else export_table(res.table, cfg, out);
  for (const auto& n : res.table.notes) std::cerr << "note: " << n << "\n";
  if (!res.bracket_final) {
    std::cerr << "N/t outside the semiclassical bracket at the largest t\n";
    return 2;
  }
  return 0;
}

int cmd_azm(json cfg, std::optional<std::string> field_path, std::optional<double> t, std::optional<double> gamma,
            std::optional<double> c, std::optional<double> C, const std::string& out) {
  if (field_path) cfg["field"] = read_config(*field_path);
  if (cfg.contains("field") && cfg["field"].contains("field")) cfg["field"] = json(cfg["field"]["field"]);
  if (t) cfg["t_grid"] = {*t};
  if (!cfg.contains("lambda_rule")) cfg["lambda_rule"] = {{"kind", "subexp"}};
  if (gamma) cfg["lambda_rule"]["gamma"] = *gamma;
  if (c) cfg["lambda_rule"]["c"] = *c;
  if (C) cfg["lambda_rule"]["C"] = *C;
  auto sc = ScanConfig::from_json(cfg);
  if (sc.t_grid.empty()) throw std::invalid_argument("azm needs t (flag or t_grid)");
  auto res = azm_scan(sc);
  json j;
  if (res.reports.size() == 1) {
    j = res.reports[0].to_json();
  } else {
    j["reports"] = json::array();
    for (const auto& r : res.reports) j["reports"].push_back(r.to_json());
    j["columns"] = res.table.columns;
    j["rows"] = res.table.rows;
  }
  j["metadata"] = metadata(cfg);
  j["notes"] = res.table.notes;
  emit(j, out);
  return 0;
}

int cmd_gauge(const json& cfg, const std::string& out) {
  auto sc = ScanConfig::from_json(cfg);
  if (!cfg.contains("grid")) sc.n = 24;
  auto rep = gauge_invariance_test(sc);
  json draws = json::array();
  for (const auto& d : rep.draws)
    draws.push_back({{"t", d.t}, {"max_rel_dev", d.max_rel_dev}, {"counts_equal", d.counts_equal}, {"pass", d.pass}});
  json j = {{"metadata", metadata(cfg)}, {"pass", rep.pass}, {"worst", rep.worst}, {"draws", draws}};
  emit(j, out);
  return rep.pass ? 0 : 2;
}

int cmd_pack(const json& cfg, const std::string& out) {
  ScalarField2D B = field_from_json(cfg.at("field"));
  Domain dom = cfg.contains("domain") ? domain_from_json(cfg["domain"]) : Domain::unit_square();
  auto [o, s] = dom.bbox();
  double rmin = cfg.contains("packing") ? cfg["packing"].value("min_radius", s / 64) : s / 64;
  int grid = cfg.contains("packing") ? cfg["packing"].value("grid", 128) : 128;
  auto P = greedy_disc_packing(B, dom, rmin, grid);
  json discs = json::array();
  for (const auto& d : P.discs)
    discs.push_back({{"center", {d.disc.center.x, d.disc.center.y}}, {"radius", d.disc.radius}, {"sign", d.sign}});
  json j = {{"metadata", metadata(cfg)},        {"discs", discs},
            {"flux_total", P.flux_total},       {"flux_covered", P.flux_covered},
            {"covered_fraction", P.covered_fraction}};
  emit(j, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral experiments for two-dimensional Pauli operators"};
  app.require_subcommand(1);
  std::string config, out;

  auto add = [&](const std::string& name, const std::string& help, bool need_config = true) {
    auto* sub = app.add_subcommand(name, help);
    auto* opt = sub->add_option("--config", config, "JSON configuration");
    if (need_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output path");
    return sub;
  };

  std::optional<double> b, lambda, t, gamma, c, C;
  std::optional<std::string> variant, field_path;
  auto* nu = add("nu", "Landau density nu(b, lambda)", false);
  nu->add_option("--b", b, "field strength");
  nu->add_option("--lambda", lambda, "spectral level");
  nu->add_option("--variant", variant, "raw, lower or upper");
  auto* pot = add("potential", "scalar potential on the unit disc");
  auto* cnt = add("count", "eigenvalue counts of the discretized operator");
  auto* weyl = add("weyl-scan", "N(lambda(t))/t against the semiclassical bracket");
  auto* azm = add("azm", "certified zero-mode test spaces on the unit disc", false);
  azm->add_option("--field", field_path, "field JSON")->check(CLI::ExistingFile);
  azm->add_option("--t", t, "coupling");
  azm->add_option("--gamma", gamma, "exponent in lambda = C exp(-c t^gamma)");
  azm->add_option("--c", c, "rate");
  azm->add_option("--C", C, "prefactor");
  auto* gauge = add("gauge-check", "random gauge transformation regression");
  auto* pack = add("pack", "greedy sign-pure disc packing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    json cfg = config.empty() ? json::object() : read_config(config);
    if (nu->parsed()) return cmd_nu(cfg, b, lambda, variant, out);
    if (pot->parsed()) return cmd_potential(cfg, out);
    if (cnt->parsed()) return cmd_count(cfg, out);
    if (weyl->parsed()) return cmd_weyl(cfg, out);
    if (azm->parsed()) return cmd_azm(cfg, field_path, t, gamma, c, C, out);
    if (gauge->parsed()) return cmd_gauge(cfg, out);
    if (pack->parsed()) return cmd_pack(cfg, out);
  } catch (const assertion_failure& e) {
    std::cerr << "assertion failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
