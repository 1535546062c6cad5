// kgbo: command-line driver for campaigns, benchmarks and the HTTP service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "kgbo/bench.hpp"
#include "kgbo/campaign.hpp"
#include "kgbo/csv.hpp"
#include "kgbo/dataset.hpp"
#include "kgbo/error.hpp"
#include "kgbo/service.hpp"

namespace fs = std::filesystem;
using namespace kgbo;

namespace {

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  return json::parse(in);
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return 2;
  if (dynamic_cast<const ConflictError*>(&e)) return 3;
  if (dynamic_cast<const ValueError*>(&e)) return 4;
  if (dynamic_cast<const ProviderError*>(&e)) return 5;
  if (dynamic_cast<const ExhaustedError*>(&e)) return 6;
  if (dynamic_cast<const CorruptStateError*>(&e)) return 7;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-guided hierarchical Bayesian optimization of reaction conditions"};
  app.require_subcommand(1);

  std::string config_path, state_path = "campaign.state.json", out_path, results_path, trajectory_path;
  bool external = false;

  auto* init = app.add_subcommand("init", "create a campaign state from a config file");
  init->add_option("--config", config_path, "campaign config JSON")->required()->check(CLI::ExistingFile);
  init->add_option("--state", state_path, "state file to write");

  auto* sug = app.add_subcommand("suggest", "print the next batch as a results CSV template");
  sug->add_option("--state", state_path)->check(CLI::ExistingFile);
  sug->add_option("--out", out_path, "write the CSV here instead of stdout");

  auto* ing = app.add_subcommand("ingest", "ingest a results CSV (variable columns + value)");
  ing->add_option("--state", state_path)->check(CLI::ExistingFile);
  ing->add_option("--results", results_path)->required()->check(CLI::ExistingFile);
  ing->add_flag("--external", external, "admit conditions that were never recommended");

  auto* st = app.add_subcommand("status", "print campaign status JSON");
  st->add_option("--state", state_path)->check(CLI::ExistingFile);

  auto* exp = app.add_subcommand("export-metrics", "per-round metrics CSV and trajectory JSON");
  exp->add_option("--state", state_path)->check(CLI::ExistingFile);
  exp->add_option("--out", out_path, "metrics CSV")->required();
  exp->add_option("--trajectory", trajectory_path, "trajectory JSON");

  auto* bench = app.add_subcommand("bench", "benchmark harness");
  bench->require_subcommand(1);
  std::string dataset_path, manifest_path, variants = "full,no_knowledge,no_data,no_both,random", prior_path;
  std::string bench_out = "bench_out", report_path, pseudo_scope = "leaf";
  int seeds = 10, rounds = 5, batch = 5, threads = 0, seed_offset = 0;
  double target = std::nan("");
  double tau = 0.95, rho = 0.2, w0 = 0.25, c_p = OptTree::default_cp;
  auto* run = bench->add_subcommand("run", "run variants over seeds on a complete lookup table");
  run->add_option("--dataset", dataset_path)->required()->check(CLI::ExistingFile);
  run->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  run->add_option("--variants", variants, "comma list: full,no_knowledge,no_data,no_both,random,table_oracle");
  run->add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  run->add_option("--seed-offset", seed_offset);
  run->add_option("--rounds", rounds)->check(CLI::PositiveNumber);
  run->add_option("--batch", batch)->check(CLI::PositiveNumber);
  run->add_option("--prior", prior_path, "related-task CSV (variables + value/objective) for the ridge predictor");
  run->add_option("--report", report_path, "static knowledge report; default: manifest subsets");
  run->add_option("--target", target);
  run->add_option("--tau", tau);
  run->add_option("--rho", rho);
  run->add_option("--w0", w0);
  run->add_option("--c-p", c_p);
  run->add_option("--pseudo-scope", pseudo_scope)->check(CLI::IsMember({"leaf", "full"}));
  run->add_option("--threads", threads);
  run->add_option("--out", bench_out, "output directory");

  std::string synth_spec_path, synth_out = "synthetic";
  std::uint64_t detail_seed = 1;
  auto* synth = bench->add_subcommand("synth", "write a synthetic complete dataset + manifest");
  synth->add_option("--spec", synth_spec_path, "SynthSpec JSON; default: the 6x6x4x4 reference spec");
  synth->add_option("--detail-seed", detail_seed, "per-value detail seed for the reference spec");
  synth->add_option("--out", synth_out, "output directory");

  std::string data_dir = "campaigns", host = "127.0.0.1", token;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--data-dir", data_dir);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--token", token, "shared bearer token");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      auto state = init_campaign(load_config(config_path));
      save_state(state, state_path);
      std::cout << status_json(state).dump(2) << "\n";
    } else if (*sug) {
      auto state = load_state(state_path);
      auto pred = make_predictor(state.config, state.space, [&](const json& e) { state.audit.push_back(e); });
      const auto batch_conds = suggest(state, pred.get());
      save_state(state, state_path);
      const auto csv = format_csv(conditions_to_csv(state.space, batch_conds));
      if (out_path.empty())
        std::cout << csv;
      else
        write_text(out_path, csv);
    } else if (*ing) {
      auto state = load_state(state_path);
      auto pred = make_predictor(state.config, state.space, [&](const json& e) { state.audit.push_back(e); });
      const auto results = parse_results_csv(state.space, read_csv(results_path));
      IngestOptions io;
      io.allow_external = external;
      const auto rep = ingest(state, results, pred.get(), io);
      save_state(state, state_path);
      std::cout << json{{"round", state.round},
                        {"status", to_string(state.status)},
                        {"ingested", rep.ingested},
                        {"abandoned", rep.abandoned},
                        {"local_retired", rep.local_retired},
                        {"global_retired", rep.global_retired},
                        {"best_so_far", rep.best ? json(*rep.best) : json(nullptr)}}
                       .dump(2)
                << "\n";
    } else if (*st) {
      std::cout << status_json(load_state(state_path)).dump(2) << "\n";
    } else if (*exp) {
      const auto state = load_state(state_path);
      write_csv(out_path, metrics_csv(state));
      if (!trajectory_path.empty()) write_text(trajectory_path, trajectory_json(state).dump(2) + "\n");
    } else if (*run) {
      auto data = std::make_shared<const LookupDataset>(load_dataset(dataset_path, manifest_path));
      BenchOptions o;
      o.rounds = rounds;
      o.batch = batch;
      o.seeds.clear();
      for (int i = 0; i < seeds; ++i) o.seeds.push_back(static_cast<std::uint64_t>(seed_offset + i));
      if (!report_path.empty()) {
        o.knowledge.kind = "static";
        o.knowledge.report_file = report_path;
      }
      if (!prior_path.empty()) {
        auto table = read_csv(prior_path);
        for (auto& h : table.header)
          if (h == "objective") h = "value";
        o.prior = parse_results_csv(data->space, table);
      }
      o.pseudo.similarity_threshold = tau;
      o.pseudo.global_discard_fraction = rho;
      o.pseudo.initial_weight = w0;
      o.pseudo.scope = pseudo_scope == "full" ? PseudoScope::full_space : PseudoScope::leaf;
      o.c_p = c_p;
      o.threads = threads;
      if (std::isfinite(target)) o.target = target;
      const auto runs = run_bench(parse_variants(variants), data, o);
      const auto summary = summarize(runs, o.target);
      fs::create_directories(bench_out);
      write_csv((fs::path(bench_out) / "summary.csv").string(), summary_csv(summary));
      write_text((fs::path(bench_out) / "plot_data.json").string(), plot_data(summary, data->name).dump(2) + "\n");
      json traj = json::array();
      for (const auto& r : runs) traj.push_back(r.to_json());
      write_text((fs::path(bench_out) / "trajectories.json").string(), traj.dump(1) + "\n");
      std::cout << format_csv(summary_csv(summary));
    } else if (*synth) {
      const SynthSpec spec =
          synth_spec_path.empty() ? reference_synth_spec(detail_seed) : SynthSpec::from_json(read_json(synth_spec_path));
      const auto ds = synth_dataset(spec);
      fs::create_directories(synth_out);
      write_csv((fs::path(synth_out) / "dataset.csv").string(), dataset_to_csv(ds.dataset));
      write_text((fs::path(synth_out) / "manifest.json").string(), ds.manifest.dump(2) + "\n");
      write_text((fs::path(synth_out) / "truth.json").string(), ds.truth.dump(2) + "\n");
      write_text((fs::path(synth_out) / "spec.json").string(), spec.to_json().dump(2) + "\n");
      std::cout << "wrote " << ds.dataset.values.size() << " rows to " << synth_out << "\n";
    } else if (*serve) {
      ServiceOptions so;
      so.data_dir = data_dir;
      so.token = token;
      Service service(so);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      service.serve();
      g_service = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}
