#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "planforge/benchmark.hpp"
#include "planforge/checkpoint.hpp"
#include "planforge/data.hpp"
#include "planforge/evaluation.hpp"
#include "planforge/inference.hpp"
#include "planforge/service.hpp"
#include "planforge/training.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace planforge;

namespace {

const Vocabulary& vocab() { return Vocabulary::residential(); }

Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), static_cast<long>(e.byte));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

void write_stats(const std::string& corpusPath, const CategoryPositionStats& stats) {
  write_text(stats_path_for(corpusPath), stats_to_json(stats, vocab()) + "\n");
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

int ingest(const std::string& in, const std::string& out, double tau, bool lenientFrontDoor) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  FilterOptions opt;
  opt.tau = tau;
  opt.strictFrontDoor = !lenientFrontDoor;
  std::vector<Floorplan> kept;
  std::map<std::string, int> reasons;
  int invalid = 0;
  for (const auto& f : files) {
    Floorplan fp;
    try {
      fp = vectorize_to_boxes(raw_sample_from_json(read_json_file(f.string()), vocab()), vocab());
    } catch (const std::exception& e) {
      std::cerr << f.string() << ": skipped: " << e.what() << "\n";
      ++invalid;
      continue;
    }
    const auto verdict = filter_noisy(fp, vocab(), opt);
    if (!verdict.keep) {
      ++reasons[verdict.reason];
      continue;
    }
    kept.push_back(std::move(fp));
  }
  const auto stats = compute_category_stats(kept);
  for (auto& fp : kept) fp = hybrid_sort(fp, stats, vocab());
  write_corpus(out, kept, vocab());
  write_stats(out, stats);
  const int discarded = static_cast<int>(files.size()) - static_cast<int>(kept.size()) - invalid;
  Json summary = {{"files", files.size()}, {"kept", kept.size()}, {"invalid", invalid}, {"discarded", discarded},
                  {"discard_rate", files.empty() ? 0.0 : static_cast<double>(discarded) / static_cast<double>(files.size())},
                  {"reasons", reasons}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int split(const std::string& in, const std::string& outDir, const std::string& mode, int heldOut, std::uint64_t seed) {
  SplitSpec spec;
  spec.mode = mode == "separate" ? SplitMode::separate : SplitMode::mixed;
  spec.heldOutRoomCount = heldOut;
  spec.seed = seed;
  const auto corpus = read_corpus(in, vocab());
  const Splits s = make_splits(corpus, spec, vocab());
  // Every split is sorted with training statistics.
  const auto stats = compute_category_stats(s.train);
  fs::create_directories(outDir);
  Json summary = Json::object();
  for (const auto& [name, plans] : {std::pair{"train", &s.train}, {"val", &s.val}, {"test", &s.test}}) {
    std::vector<Floorplan> sorted;
    for (const auto& fp : *plans) sorted.push_back(hybrid_sort(fp, stats, vocab()));
    const std::string path = (fs::path(outDir) / (std::string(name) + ".jsonl")).string();
    write_corpus(path, sorted, vocab());
    write_stats(path, stats);
    summary[name] = sorted.size();
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int synth(int n, const std::string& rooms, std::uint64_t seed, const std::string& out, const std::string& diagramsOut) {
  SynthOptions opt;
  const auto dots = rooms.find("..");
  try {
    if (dots == std::string::npos) {
      opt.minRooms = opt.maxRooms = std::stoi(rooms);
    } else {
      opt.minRooms = std::stoi(rooms.substr(0, dots));
      opt.maxRooms = std::stoi(rooms.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw ConfigError("--rooms expects N or MIN..MAX, got '" + rooms + "'");
  }
  const auto samples = synth_corpus(n, opt, seed, vocab());
  std::vector<Floorplan> plans;
  for (const auto& s : samples) plans.push_back(s.plan);
  write_corpus(out, plans, vocab());
  write_stats(out, compute_category_stats(plans));
  if (!diagramsOut.empty()) {
    std::ofstream os(diagramsOut);
    if (!os) throw ConfigError("cannot write " + diagramsOut);
    for (const auto& s : samples) os << to_json(s.diagram, vocab()).dump() << "\n";
  }
  std::cout << Json{{"plans", plans.size()}, {"out", out}}.dump() << "\n";
  return 0;
}

int train(const std::string& configPath) {
  const TrainConfig cfg = train_config_from_json(read_json_file(configPath));
  if (cfg.corpusPath.empty()) throw ConfigError("train: config needs \"corpus\"");
  if (cfg.outputDir.empty()) throw ConfigError("train: config needs \"out\"");
  run_training(cfg, vocab(), &std::cerr);
  std::cout << Json{{"checkpoint", (fs::path(cfg.outputDir) / "model.ckpt").string()},
                    {"metrics", (fs::path(cfg.outputDir) / "metrics.jsonl").string()}}
                   .dump()
            << "\n";
  return 0;
}

int generate_cmd(const std::string& modelPath, const std::string& diagramPath, const GenerationRequest& base,
                 const std::string& outDir) {
  const ModelBundle bundle = load_checkpoint(modelPath);
  GenerationRequest req = base;
  req.diagram = diagram_from_json(read_json_file(diagramPath), bundle.vocab);
  const GenerationResult result = generate(req, bundle);
  fs::create_directories(outDir);
  Json j = to_json(result, bundle.vocab);
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const std::string svg = "candidate_" + std::to_string(i) + ".svg";
    write_text(fs::path(outDir) / svg, render_svg(result.candidates[i].plan, bundle.vocab));
    j["candidates"][i]["svg"] = svg;
  }
  write_text(fs::path(outDir) / "result.json", j.dump(2) + "\n");
  std::cout << Json{{"candidates", result.candidates.size()}, {"out", outDir}}.dump() << "\n";
  return 0;
}

int eval_cmd(const std::string& modelPath, const std::string& splitPath, const std::string& metrics, const EvalOptions& base,
             const std::string& reportPath) {
  const ModelBundle bundle = load_checkpoint(modelPath);
  EvalOptions opt = base;
  opt.ged = opt.fid = false;
  std::stringstream ss(metrics);
  for (std::string m; std::getline(ss, m, ',');) {
    if (m == "ged")
      opt.ged = true;
    else if (m == "fid")
      opt.fid = true;
    else
      throw ConfigError("--metrics: unknown metric '" + m + "'");
  }
  if (!opt.ged && !opt.fid) throw ConfigError("--metrics: nothing to compute");
  const auto plans = read_corpus(splitPath, bundle.vocab);
  const Json report = to_json(evaluate_model(bundle, plans, opt));
  if (!reportPath.empty()) write_text(reportPath, report.dump(2) + "\n");
  std::cout << report.dump() << "\n";
  return 0;
}

int serve(std::string modelPath, std::string storePath, int port, const std::string& host, int timeoutSeconds) {
  modelPath = modelPath.empty() ? env_or("PLANFORGE_MODEL", "") : modelPath;
  storePath = storePath.empty() ? env_or("PLANFORGE_STORE", "") : storePath;
  if (port == 0) port = std::stoi(env_or("PLANFORGE_PORT", "8080"));
  std::shared_ptr<const ModelBundle> bundle;
  if (!modelPath.empty()) {
    try {
      bundle = std::make_shared<ModelBundle>(load_checkpoint(modelPath));
    } catch (const std::exception& e) {
      std::cerr << Json{{"event", "model_load_failed"}, {"path", modelPath}, {"error", e.what()}}.dump() << std::endl;
    }
  }
  std::shared_ptr<SessionStore> store;
  if (storePath.empty())
    store = std::make_shared<MemorySessionStore>();
  else
    store = std::make_shared<JsonFileSessionStore>(storePath);
  ServiceOptions opt;
  opt.generationTimeout = std::chrono::seconds(timeoutSeconds);
  PlanService service(bundle, store, opt);
  httplib::Server server;
  service.mount(server, &std::cout);
  std::cerr << Json{{"event", "listening"}, {"host", host}, {"port", port}, {"model", service.model_loaded()}}.dump()
            << std::endl;
  if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planforge: bubble-diagram conditioned floorplan generation"};
  app.require_subcommand(1);

  auto* data = app.add_subcommand("data", "Corpus preparation");
  data->require_subcommand(1);

  std::string ingestIn, ingestOut;
  double tau = 0.5;
  bool lenientFrontDoor = false;
  auto* ingestCmd = data->add_subcommand("ingest", "Vectorize and filter raw vector plans");
  ingestCmd->add_option("--in", ingestIn, "Directory of raw plan JSON files")->required()->check(CLI::ExistingDirectory);
  ingestCmd->add_option("--out", ingestOut, "Output corpus (JSON lines)")->required();
  ingestCmd->add_option("--tau", tau, "Door overlap threshold")->check(CLI::Range(0.0, 1.0));
  ingestCmd->add_flag("--lenient-front-door", lenientFrontDoor, "Threshold front doors with tau too");

  std::string splitIn, splitOut = "splits", splitMode = "mixed";
  int heldOut = 6;
  std::uint64_t splitSeed = 17;
  auto* splitCmd = data->add_subcommand("split", "Train/val/test split");
  splitCmd->add_option("--in", splitIn, "Corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  splitCmd->add_option("--out", splitOut, "Output directory");
  splitCmd->add_option("--mode", splitMode, "mixed or separate")->check(CLI::IsMember({"mixed", "separate"}));
  splitCmd->add_option("--held-out", heldOut, "Room count held out in separate mode");
  splitCmd->add_option("--seed", splitSeed);

  int synthN = 500;
  std::string rooms = "4..8", synthOut = "synth.jsonl", diagramsOut;
  std::uint64_t synthSeed = 7;
  auto* synthCmd = data->add_subcommand("synth", "Synthetic guillotine-cut corpus");
  synthCmd->add_option("--n", synthN)->check(CLI::PositiveNumber);
  synthCmd->add_option("--rooms", rooms, "N or MIN..MAX");
  synthCmd->add_option("--seed", synthSeed);
  synthCmd->add_option("--out", synthOut, "Output corpus (JSON lines)");
  synthCmd->add_option("--diagrams-out", diagramsOut, "Also write the bubble diagrams (JSON lines)");

  std::string configPath;
  auto* trainCmd = app.add_subcommand("train", "Train draft and refinement networks");
  trainCmd->add_option("--config", configPath)->required()->check(CLI::ExistingFile);

  std::string modelPath, diagramPath, genOut = "results";
  GenerationRequest req;
  req.numCandidates = 4;
  auto* genCmd = app.add_subcommand("generate", "Generate candidate layouts for a bubble diagram");
  genCmd->add_option("--model", modelPath, "Checkpoint (default $PLANFORGE_MODEL)");
  genCmd->add_option("--diagram", diagramPath)->required()->check(CLI::ExistingFile);
  genCmd->add_option("--n", req.numCandidates);
  genCmd->add_option("--seed", req.seed);
  genCmd->add_option("--top-k", req.topK);
  genCmd->add_option("--refine-iters", req.refineIters);
  genCmd->add_option("--out", genOut);

  std::string evalModel, evalSplit, metrics = "ged,fid", reportPath;
  EvalOptions evalOpt;
  auto* evalCmd = app.add_subcommand("eval", "Compatibility and FID over a split");
  evalCmd->add_option("--model", evalModel)->required()->check(CLI::ExistingFile);
  evalCmd->add_option("--split", evalSplit)->required()->check(CLI::ExistingFile);
  evalCmd->add_option("--metrics", metrics, "Comma separated: ged, fid");
  evalCmd->add_option("--report", reportPath);
  evalCmd->add_option("--rounds", evalOpt.rounds)->check(CLI::PositiveNumber);
  evalCmd->add_option("--refine-iters", evalOpt.refineIters)->check(CLI::NonNegativeNumber);
  evalCmd->add_option("--top-k", evalOpt.topK)->check(CLI::Range(1, 256));
  evalCmd->add_option("--seed", evalOpt.seed);

  std::string serveModel, storePath, host = "0.0.0.0";
  int port = 0, timeoutSeconds = 60;
  auto* serveCmd = app.add_subcommand("serve", "REST service under /v1");
  serveCmd->add_option("--model", serveModel, "Checkpoint (default $PLANFORGE_MODEL)");
  serveCmd->add_option("--store", storePath, "Session file (default $PLANFORGE_STORE, else in memory)");
  serveCmd->add_option("--port", port, "Port (default $PLANFORGE_PORT, else 8080)");
  serveCmd->add_option("--host", host);
  serveCmd->add_option("--timeout", timeoutSeconds, "Generation timeout in seconds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingestCmd) return ingest(ingestIn, ingestOut, tau, lenientFrontDoor);
    if (*splitCmd) return split(splitIn, splitOut, splitMode, heldOut, splitSeed);
    if (*synthCmd) return synth(synthN, rooms, synthSeed, synthOut, diagramsOut);
    if (*trainCmd) return train(configPath);
    if (*genCmd) {
      if (modelPath.empty()) modelPath = env_or("PLANFORGE_MODEL", "");
      if (modelPath.empty()) throw ConfigError("generate: --model or PLANFORGE_MODEL is required");
      return generate_cmd(modelPath, diagramPath, req, genOut);
    }
    if (*evalCmd) return eval_cmd(evalModel, evalSplit, metrics, evalOpt, reportPath);
    if (*serveCmd) return serve(serveModel, storePath, port, host, timeoutSeconds);
  } catch (const ValidationError& e) {
    for (const auto& f : e.errors()) std::cerr << "invalid " << f.field << ": " << f.message << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
