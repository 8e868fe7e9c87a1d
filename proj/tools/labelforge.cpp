#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "labelforge/config.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/error.hpp"
#include "labelforge/http_server.hpp"
#include "labelforge/service.hpp"
#include "labelforge/simulator.hpp"

namespace fs = std::filesystem;
using namespace labelforge;

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + e.what());
  }
}

// Offline view of the service state. A torn or corrupt log tail is
// reported and the valid prefix is used.
ServiceState offline_state(const ServiceConfig& config) {
  auto initial = initial_state(config);
  std::ifstream in(config.event_log, std::ios::binary);
  if (!in) return initial;
  auto result = replay_log(std::move(initial), in);
  if (result.first_bad_seq) {
    std::cerr << "warning: event log unreadable from seq "
              << *result.first_bad_seq << " (" << result.error
              << "); using the first " << result.replayed << " events\n";
  }
  return std::move(result.state);
}

struct IngestArgs {
  std::string prompts;
  std::size_t synthetic = 0;
  std::string blocklist;
  std::string out;
  double gold_fraction = kDefaultGoldFraction;
  std::uint64_t seed = 1;
};

int run_ingest(const IngestArgs& a) {
  std::vector<Prompt> prompts;
  if (!a.prompts.empty()) {
    prompts = load_prompts(a.prompts);
  } else if (a.synthetic > 0) {
    prompts = synthetic_prompts(a.synthetic, a.seed);
  } else {
    throw Error(ErrorCode::kInvalidArgument,
                "ingest needs --prompts or --synthetic");
  }
  Blocklist blocklist =
      a.blocklist.empty() ? Blocklist::builtin() : Blocklist::load(a.blocklist);
  StubImageGenerator gen(a.out);
  auto pool = build_pool(prompts, blocklist, a.gold_fraction, gen, a.seed);
  save_pool(pool, a.out);
  std::cout << nlohmann::json{{"prompts_in", prompts.size()},
                              {"real", pool.real.size()},
                              {"gold", pool.gold.size()},
                              {"out", a.out}}
                   .dump()
            << "\n";
  return 0;
}

struct ServeArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string bind;
  std::string port_file;
  bool repair = false;
  int threads = 64;
};

int run_serve(const ServeArgs& a) {
  auto config = load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (!a.bind.empty()) config.bind_addr = a.bind;
  if (config.admin_token.empty()) {
    std::cerr << "warning: server.admin_token is empty; admin endpoints are "
                 "disabled\n";
  }

  // Block termination signals before any thread starts so that only the
  // waiter below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto service = CollectionService::open(config, wall_clock_now, a.repair);
  HttpServer server(*service, config.admin_token, config.pool_dir / "images",
                    a.threads);
  auto [host, port] = split_bind_addr(config.bind_addr);
  int bound = server.bind(host, port);
  if (!a.port_file.empty()) {
    auto tmp = a.port_file + ".tmp";
    write_file(tmp, std::to_string(bound) + "\n");
    fs::rename(tmp, a.port_file);
  }
  std::cerr << "listening on " << host << ":" << bound << " (last_seq "
            << service->last_seq() << ")\n";
  service->start_expiry_worker(
      std::chrono::seconds(std::max<std::int64_t>(1, config.expiry_interval_seconds)));

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  waiter.detach();
  server.listen();
  service->stop_expiry_worker();
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
};

int run_simulate(const SimulateArgs& a) {
  SimConfig config;
  if (!a.config.empty()) {
    auto doc = read_json_file(a.config);
    auto base = fs::path(a.config).parent_path();
    if (auto it = doc.find("pool");
        it != doc.end() && it->contains("dir") && (*it)["dir"].is_string()) {
      fs::path dir = (*it)["dir"].get<std::string>();
      if (dir.is_relative()) (*it)["dir"] = (base / dir).string();
    }
    config = sim_config_from_json(doc);
  }
  if (a.seed) config.population.seed = *a.seed;
  auto pool = make_sim_pool(config.pool);

  std::string report;
  if (config.sweep.empty()) {
    auto run = run_sim(pool, config.population, config.policy, config.cost,
                       config.assignment, config.top_ks);
    report = to_json(run.report).dump(2) + "\n";
    std::cout << format_sweep_table({{0, config.policy, run.report}});
    if (!a.dataset.empty()) {
      std::ofstream out(a.dataset, std::ios::binary | std::ios::trunc);
      export_dataset(run.dataset, out);
    }
  } else {
    auto rows = sweep(pool, config.sweep, config.population, config.cost,
                      config.assignment, config.top_ks);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& row : rows) {
      cells.push_back({{"cell", row.cell},
                       {"policy", to_json(row.policy)},
                       {"report", to_json(row.report)}});
    }
    report = nlohmann::json{{"sweep", std::move(cells)}}.dump(2) + "\n";
    std::cout << format_sweep_table(rows);
  }
  if (a.out.empty() || a.out == "-") {
    std::cout << report;
  } else {
    write_file(a.out, report);
  }
  return 0;
}

int run_stats(const std::string& config_path) {
  auto config = load_config(config_path);
  std::cout << stats_json(offline_state(config), config.cost_model).dump(2)
            << "\n";
  return 0;
}

int run_export(const std::string& config_path, const std::string& out) {
  auto config = load_config(config_path);
  auto bytes = export_snapshot(offline_state(config));
  if (out.empty() || out == "-") {
    std::cout << bytes;
  } else {
    write_file(out, bytes);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelforge: pairwise image-preference collection"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ing = app.add_subcommand("ingest", "Build a task pool from a prompt corpus");
  ing->add_option("--prompts", ingest.prompts, "Prompt corpus (JSON lines)");
  ing->add_option("--synthetic", ingest.synthetic,
                  "Generate this many synthetic prompts instead");
  ing->add_option("--blocklist", ingest.blocklist,
                  "Blocklist file, one word per line (default: built-in)");
  ing->add_option("--out", ingest.out, "Pool directory")->required();
  ing->add_option("--gold-fraction", ingest.gold_fraction)
      ->check(CLI::Range(0.0, 1.0));
  ing->add_option("--seed", ingest.seed);

  ServeArgs serve;
  auto* srv = app.add_subcommand("serve", "Run the HTTP collection service");
  srv->add_option("--config", serve.config)->required();
  srv->add_option("--seed", serve.seed);
  srv->add_option("--bind", serve.bind, "host:port, overrides server.bind_addr");
  srv->add_option("--port-file", serve.port_file,
                  "Write the bound port here once listening");
  srv->add_flag("--repair", serve.repair,
                "Truncate a corrupt event log tail instead of refusing to start");
  srv->add_option("--threads", serve.threads)->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Run the annotator population simulator");
  sm->add_option("--config", sim.config, "Simulation config (JSON)");
  sm->add_option("--seed", sim.seed, "Overrides population.seed");
  sm->add_option("--out", sim.out, "Report path (default: stdout)");
  sm->add_option("--dataset", sim.dataset,
                 "Also write the simulated export here");

  std::string stats_config;
  auto* st = app.add_subcommand("stats", "Print dataset statistics");
  st->add_option("--config", stats_config)->required();

  std::string export_config, export_out;
  auto* ex = app.add_subcommand("export", "Write the dataset as JSON lines");
  ex->add_option("--config", export_config)->required();
  ex->add_option("--out", export_out, "Output path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ing) return run_ingest(ingest);
    if (*srv) return run_serve(serve);
    if (*sm) return run_simulate(sim);
    if (*st) return run_stats(stats_config);
    if (*ex) return run_export(export_config, export_out);
  } catch (const CorruptLogError& e) {
    std::cerr << "error: " << e.what() << " (first bad seq "
              << e.first_bad_seq() << "; rerun with --repair to truncate)\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
