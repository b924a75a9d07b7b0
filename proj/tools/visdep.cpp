// visdep: synthetic-corpus pipeline for visual-dependence analysis, loss
// re-weighting, data filtering and hallucination evaluation.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "visdep/filter.hpp"
#include "visdep/format.hpp"
#include "visdep/pipeline.hpp"
#include "visdep/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace visdep;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct TrainOpts {
  std::string loss = "mle";
  double tau = 0.5;
  double start_frac = 0.5;
  bool no_eos_floor = false;
  int noise_step = kDefaultNoiseStep;
  int epochs = 2;
  int batch_size = 128;
  double lr = 3e-3;
  std::string lr_schedule = "constant";
  std::string optimizer = "adam";
  int d_emb = 32;
  int d_hid = 64;

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = lr;
    tc.lr_schedule = parse_lr_schedule(lr_schedule);
    tc.optimizer = parse_optimizer(optimizer);
    tc.seed = seed;
    tc.reweight = {parse_weight_mode(loss), tau, start_frac, !no_eos_floor};
    tc.noise_step = noise_step;
    tc.d_emb = d_emb;
    tc.d_hid = d_hid;
    tc.validate();
    return tc;
  }

  json to_json() const {
    return {{"loss", loss},         {"tau", tau},
            {"start_frac", start_frac}, {"eos_floor", !no_eos_floor},
            {"noise_step", noise_step}, {"epochs", epochs},
            {"batch_size", batch_size}, {"lr", lr},
            {"lr_schedule", lr_schedule}, {"optimizer", optimizer},
            {"d_emb", d_emb},       {"d_hid", d_hid}};
  }
};

void add_common(CLI::App* app, Common& c, std::uint64_t default_seed) {
  c.seed = default_seed;
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--out-dir", c.out_dir, "Output directory (default $VISDEP_OUT or .)");
}

void add_train_opts(CLI::App* app, TrainOpts& t) {
  app->add_option("--loss", t.loss, "Loss weighting")->check(CLI::IsMember({"mle", "wneg", "wpos"}))->capture_default_str();
  app->add_option("--tau", t.tau, "Softmax temperature of the weights")->capture_default_str();
  app->add_option("--start-frac", t.start_frac, "Training progress at which re-weighting starts")->capture_default_str();
  app->add_flag("--no-eos-floor", t.no_eos_floor, "Allow the EOS weight to drop below 1");
  app->add_option("--noise-step", t.noise_step, "Diffusion step of the noised condition")->capture_default_str();
  app->add_option("--epochs", t.epochs)->capture_default_str();
  app->add_option("--batch-size", t.batch_size)->capture_default_str();
  app->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
  app->add_option("--lr-schedule", t.lr_schedule)->check(CLI::IsMember({"constant", "cosine"}))->capture_default_str();
  app->add_option("--optimizer", t.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  app->add_option("--d-emb", t.d_emb, "Token embedding width")->capture_default_str();
  app->add_option("--d-hid", t.d_hid, "GRU hidden width")->capture_default_str();
}

fs::path resolve_out(const Common& c) {
  fs::path out = c.out_dir;
  if (out.empty()) {
    const char* env = std::getenv("VISDEP_OUT");
    out = env && *env ? env : ".";
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// run.json holds the subcommand, the resolved configuration and the argument
// list; `visdep replay run.json` re-executes the argument list.
void write_run(const fs::path& out, const std::string& cmd, const Common& c, json config,
               const std::vector<std::string>& args) {
  write_json(out / "run.json",
             {{"tool", "visdep"}, {"subcommand", cmd}, {"seed", c.seed}, {"config", std::move(config)}, {"args", args}});
}

int vocab_objects_of(const std::vector<SyntheticScene>& corpus) {
  if (corpus.empty()) throw DataError("corpus is empty");
  return static_cast<int>(corpus.front().feature.size());
}

std::vector<SyntheticScene> load_corpus(const std::string& path) {
  auto corpus = read_corpus(path);
  const int v = vocab_objects_of(corpus);
  for (const auto& s : corpus) validate(s, v);
  return corpus;
}

std::string analysis_csv(const TraceFile& f) {
  std::ostringstream os;
  os << "sample_id,t,surface,p_clean,p_noisy,d,class\n";
  for (const auto& t : f.traces) {
    const auto prof = profile_trace(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
      os << csv_field(t.sample_id) << ',' << i << ',' << csv_field(t.surfaces[i]) << ',' << fmt_double(t.p_clean[i])
         << ',' << fmt_double(t.p_noisy[i]) << ',' << fmt_double(prof.d[i]) << ',' << to_string(prof.classes[i])
         << '\n';
    }
  }
  return os.str();
}

std::string histogram_csv(const CoOccurrenceHistogram& h) {
  std::ostringstream os;
  os << "class,distance,count\n";
  for (TokenClass c : kAllClasses) {
    const auto k = class_index(c);
    for (std::size_t b = 0; b < h.counts[k].size(); ++b) os << to_string(c) << ',' << b << ',' << h.counts[k][b] << '\n';
    os << to_string(c) << ",beyond," << h.beyond[k] << '\n';
    os << to_string(c) << ",absent," << h.absent[k] << '\n';
  }
  return os.str();
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json eval_json(const HallucinationReport& rep, const ClassObjectCounts& cc, const CoOccurrenceHistogram& h) {
  json j = to_json(rep);
  json counts = json::object();
  json within = json::object();
  for (TokenClass c : kAllClasses) {
    const auto k = class_index(c);
    counts[std::string(to_string(c))] = {{"grounded", cc.grounded[k]}, {"hallucinated", cc.hallucinated[k]}};
    within[std::string(to_string(c))] = nullable(h.within_fraction(c));
  }
  j["class_object_counts"] = counts;
  j["cooccurrence"] = {{"window", h.window}, {"hallucinated_mentions", h.hallucinated_mentions}, {"within", within}};
  return j;
}

struct EvalResult {
  HallucinationReport report;
  TraceFile traces;
};

EvalResult evaluate_model(const ModelParams& params, const std::vector<SyntheticScene>& test, int noise_step,
                          std::uint64_t seed, int max_len, const fs::path& out, int window) {
  EvalResult r{{}, generate_traces(params, test, noise_step, seed, max_len)};
  const auto lex = synthetic_lexicon(Vocabulary(params.config().cond_dim));
  const auto responses = responses_of(r.traces);
  const auto truths = truths_of(test);
  const auto profiles = profiles_of(r.traces);
  r.report = evaluate(responses, truths, lex);
  const auto cc = class_object_counts(profiles, responses, truths, lex);
  const auto h = co_occurrence(profiles, responses, truths, lex, window);
  write_json(out / "report.json", eval_json(r.report, cc, h));
  write_text(out / "cooccurrence.csv", histogram_csv(h));
  write_traces(r.traces, out / "traces.jsonl");
  return r;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--values: not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--values is empty");
  return out;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

std::string sweep_dir_name(const std::string& axis, double v) { return axis + "=" + fmt_double(v); }

int run(int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
  auto fail = [](const char* kind, const std::string& msg, ExitCode code) {
    std::cerr << json{{"error", kind}, {"message", msg}}.dump() << '\n';
    return static_cast<int>(code);
  };
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), ExitCode::kUsage);
  } catch (const DataError& e) {
    return fail("data", e.what(), ExitCode::kData);
  } catch (const DivergenceError& e) {
    return fail("divergence", e.what(), ExitCode::kDivergence);
  } catch (const json::exception& e) {
    return fail("data", e.what(), ExitCode::kData);
  }
}

namespace {

int run(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"visdep: visual-dependence analysis on a synthetic captioning task"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  CorpusConfig corpus_cfg;
  double pair_prob = 1.0, test_frac = 0.2;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene-captioning corpus");
  add_common(synth, synth_c, 42);
  synth->add_option("--scenes", corpus_cfg.num_scenes, "Number of scenes")->capture_default_str();
  synth->add_option("--vocab-objects", corpus_cfg.vocab_objects)->capture_default_str();
  synth->add_option("--hallucination-rate", corpus_cfg.hallucination_rate)->capture_default_str();
  synth->add_option("--pair-prob", pair_prob, "Probability of every default bias pair")->capture_default_str();
  synth->add_option("--jitter", corpus_cfg.jitter)->capture_default_str();
  synth->add_option("--test-frac", test_frac, "Held-out fraction written to test.jsonl (0 disables)")
      ->capture_default_str();

  // train
  Common train_c;
  TrainOpts train_o;
  std::string train_corpus, train_manifest;
  auto* train_cmd = app.add_subcommand("train", "Train the toy captioner");
  add_common(train_cmd, train_c, 0);
  train_cmd->add_option("--corpus", train_corpus, "Training corpus (JSON lines)")->required();
  train_cmd->add_option("--manifest", train_manifest, "Drop the samples a filter manifest removed");
  add_train_opts(train_cmd, train_o);

  // analyze
  Common an_c;
  std::string an_traces, an_ckpt, an_corpus;
  int an_noise = kDefaultNoiseStep;
  auto* analyze = app.add_subcommand("analyze", "Per-token visual dependence CSV");
  add_common(analyze, an_c, 0);
  analyze->add_option("--traces", an_traces, "Existing trace file");
  analyze->add_option("--ckpt", an_ckpt, "Checkpoint to score --corpus captions with");
  analyze->add_option("--corpus", an_corpus);
  analyze->add_option("--noise-step", an_noise)->capture_default_str();

  // filter
  Common fl_c;
  std::string fl_ckpt, fl_corpus, fl_strategy = "highest";
  double fl_frac = 0.1;
  int fl_noise = kDefaultNoiseStep, fl_draws = 1;
  auto* filter = app.add_subcommand("filter", "Rank samples by summed dependence and drop a fraction");
  add_common(filter, fl_c, 0);
  filter->add_option("--ckpt", fl_ckpt, "Scoring model")->required();
  filter->add_option("--corpus", fl_corpus)->required();
  filter->add_option("--strategy", fl_strategy)->check(CLI::IsMember({"highest", "lowest", "random"}))
      ->capture_default_str();
  filter->add_option("--frac", fl_frac)->capture_default_str();
  filter->add_option("--noise-step", fl_noise)->capture_default_str();
  filter->add_option("--noise-draws", fl_draws, "Noise draws averaged per sample")->capture_default_str();

  // eval
  Common ev_c;
  std::string ev_ckpt, ev_corpus;
  int ev_noise = kDefaultNoiseStep, ev_max_len = kDefaultMaxLen, ev_window = 3;
  auto* eval = app.add_subcommand("eval", "Generate captions and score hallucination");
  add_common(eval, ev_c, 0);
  eval->add_option("--ckpt", ev_ckpt)->required();
  eval->add_option("--corpus", ev_corpus, "Evaluation scenes")->required();
  eval->add_option("--noise-step", ev_noise)->capture_default_str();
  eval->add_option("--max-len", ev_max_len)->capture_default_str();
  eval->add_option("--window", ev_window, "Co-occurrence window")->capture_default_str();

  // sweep
  Common sw_c;
  TrainOpts sw_o;
  std::string sw_axis, sw_values, sw_train, sw_test;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate once per value of one axis");
  add_common(sweep, sw_c, 0);
  sweep->add_option("--axis", sw_axis)->required()->check(CLI::IsMember({"tau", "start-frac", "noise-step"}));
  sweep->add_option("--values", sw_values, "Comma-separated values")->required();
  sweep->add_option("--train", sw_train, "Training corpus")->required();
  sweep->add_option("--test", sw_test, "Evaluation corpus")->required();
  sw_o.loss = "wneg";
  add_train_opts(sweep, sw_o);

  // plot
  Common pl_c;
  std::string pl_traces, pl_manifest;
  int pl_bins = 20, pl_max = 10;
  auto* plot = app.add_subcommand("plot", "SVG figures from traces and filter scores");
  add_common(plot, pl_c, 0);
  plot->add_option("--traces", pl_traces, "Trace file: one bar chart per trace");
  plot->add_option("--manifest", pl_manifest, "Filter manifest: histogram of sample scores");
  plot->add_option("--bins", pl_bins)->capture_default_str();
  plot->add_option("--max-plots", pl_max, "Bar charts for at most this many traces")->capture_default_str();

  // replay
  std::string rp_file;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run.json");
  replay->add_option("run_json", rp_file)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (*synth) {
    for (auto& p : corpus_cfg.bias_pairs) p.probability = pair_prob;
    corpus_cfg.seed = synth_c.seed;
    corpus_cfg.validate();
    if (!(test_frac >= 0.0 && test_frac < 1.0)) throw UsageError("--test-frac must lie in [0,1)");
    const auto out = resolve_out(synth_c);
    const auto corpus = generate_corpus(corpus_cfg);
    write_corpus(corpus, out / "corpus.jsonl");
    if (test_frac > 0.0) {
      const auto split = train_test_split(corpus, test_frac, synth_c.seed, corpus_cfg.vocab_objects);
      write_corpus(split.train, out / "train.jsonl");
      write_corpus(split.test, out / "test.jsonl");
    }
    write_run(out, "synth", synth_c,
              {{"scenes", corpus_cfg.num_scenes}, {"vocab_objects", corpus_cfg.vocab_objects},
               {"hallucination_rate", corpus_cfg.hallucination_rate}, {"pair_prob", pair_prob},
               {"jitter", corpus_cfg.jitter}, {"test_frac", test_frac}},
              args);
    return 0;
  }

  if (*train_cmd) {
    const auto tc = train_o.config(train_c.seed);
    auto corpus = load_corpus(train_corpus);
    if (!train_manifest.empty()) corpus = filtered_corpus(corpus, read_manifest(train_manifest));
    const auto out = resolve_out(train_c);
    const auto r = train(corpus, tc, vocab_objects_of(corpus));
    save_checkpoint(r.params, out / "ckpt.json");
    write_train_log(r.log, out / "trainlog.csv");
    json cfg = train_o.to_json();
    cfg["corpus"] = train_corpus;
    cfg["manifest"] = train_manifest;
    cfg["samples"] = corpus.size();
    write_run(out, "train", train_c, cfg, args);
    return 0;
  }

  if (*analyze) {
    TraceFile f;
    if (!an_traces.empty()) {
      if (!an_ckpt.empty() || !an_corpus.empty()) throw UsageError("--traces excludes --ckpt/--corpus");
      f = read_traces(an_traces);
    } else {
      if (an_ckpt.empty() || an_corpus.empty()) throw UsageError("analyze needs --traces, or --ckpt with --corpus");
      if (an_noise < 0 || an_noise > kDefaultNoiseSteps) throw UsageError("--noise-step must lie in [0, 1000]");
      f = caption_traces(load_checkpoint(an_ckpt), load_corpus(an_corpus), an_noise, an_c.seed);
    }
    const auto out = resolve_out(an_c);
    if (an_traces.empty()) write_traces(f, out / "traces.jsonl");
    write_text(out / "analysis.csv", analysis_csv(f));
    write_run(out, "analyze", an_c,
              {{"traces", an_traces}, {"ckpt", an_ckpt}, {"corpus", an_corpus}, {"noise_step", f.header.noise_step}},
              args);
    return 0;
  }

  if (*filter) {
    const auto strategy = parse_filter_strategy(fl_strategy);
    const auto params = load_checkpoint(fl_ckpt);
    const auto corpus = load_corpus(fl_corpus);
    const auto scores = score_corpus(corpus, params, fl_noise, fl_c.seed, fl_draws);
    const auto manifest = apply_filter(scores, strategy, fl_frac, fl_c.seed);
    const auto out = resolve_out(fl_c);
    write_manifest(manifest, out / "manifest.json");
    write_run(out, "filter", fl_c,
              {{"ckpt", fl_ckpt}, {"corpus", fl_corpus}, {"strategy", fl_strategy}, {"frac", fl_frac},
               {"noise_step", fl_noise}, {"noise_draws", fl_draws}},
              args);
    return 0;
  }

  if (*eval) {
    if (ev_noise < 0 || ev_noise > kDefaultNoiseSteps) throw UsageError("--noise-step must lie in [0, 1000]");
    const auto params = load_checkpoint(ev_ckpt);
    const auto test = load_corpus(ev_corpus);
    if (static_cast<int>(test.front().feature.size()) != params.config().cond_dim) {
      throw DataError("corpus feature width does not match the checkpoint");
    }
    const auto out = resolve_out(ev_c);
    evaluate_model(params, test, ev_noise, ev_c.seed, ev_max_len, out, ev_window);
    write_run(out, "eval", ev_c,
              {{"ckpt", ev_ckpt}, {"corpus", ev_corpus}, {"noise_step", ev_noise}, {"max_len", ev_max_len},
               {"window", ev_window}},
              args);
    return 0;
  }

  if (*sweep) {
    const auto values = parse_values(sw_values);
    const auto train_set = load_corpus(sw_train);
    const auto test_set = load_corpus(sw_test);
    // validate every setting before the first run starts
    std::vector<TrainOpts> settings;
    for (double v : values) {
      TrainOpts o = sw_o;
      if (sw_axis == "tau") o.tau = v;
      if (sw_axis == "start-frac") o.start_frac = v;
      if (sw_axis == "noise-step") {
        if (v != std::floor(v)) throw UsageError("noise-step values must be integers");
        o.noise_step = static_cast<int>(v);
      }
      o.config(sw_c.seed);
      settings.push_back(o);
    }
    const auto out = resolve_out(sw_c);
    std::ostringstream csv;
    csv << "value,chair_s,chair_i,recall,mean_len\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto dir = out / sweep_dir_name(sw_axis, values[i]);
      fs::create_directories(dir);
      const auto r = train(train_set, settings[i].config(sw_c.seed), vocab_objects_of(train_set));
      save_checkpoint(r.params, dir / "ckpt.json");
      write_train_log(r.log, dir / "trainlog.csv");
      const auto ev = evaluate_model(r.params, test_set, settings[i].noise_step, sw_c.seed, kDefaultMaxLen, dir, 3);
      csv << fmt_double(values[i]) << ',' << fmt_double(ev.report.chair_s) << ',' << fmt_double(ev.report.chair_i)
          << ',' << fmt_double(ev.report.recall) << ',' << fmt_double(ev.report.mean_len) << '\n';
    }
    write_text(out / "sweep.csv", csv.str());
    json cfg = sw_o.to_json();
    cfg["axis"] = sw_axis;
    cfg["values"] = values;
    cfg["train"] = sw_train;
    cfg["test"] = sw_test;
    write_run(out, "sweep", sw_c, cfg, args);
    return 0;
  }

  if (*plot) {
    if (pl_traces.empty() && pl_manifest.empty()) throw UsageError("plot needs --traces and/or --manifest");
    if (pl_max < 1) throw UsageError("--max-plots must be >= 1");
    // build everything in memory first so a bad input leaves no artifact behind
    std::vector<std::pair<std::string, std::string>> files;
    if (!pl_traces.empty()) {
      const auto f = read_traces(pl_traces);
      if (f.traces.empty()) throw DataError("trace file has no traces: " + pl_traces);
      TraceFile shown{f.header, {}};
      for (const auto& t : f.traces) {
        if (static_cast<int>(shown.traces.size()) == pl_max) break;
        shown.traces.push_back(t);
        files.emplace_back("trace_" + file_safe(t.sample_id) + ".svg", trace_bar_svg(t));
      }
      files.emplace_back("trace_bars.csv", analysis_csv(shown));
    }
    if (!pl_manifest.empty()) {
      const auto m = read_manifest(pl_manifest);
      std::vector<double> scores;
      for (const auto& s : m.scores) scores.push_back(s.score);
      const auto h = histogram(scores, pl_bins);
      std::ostringstream csv;
      csv << "bin_lo,bin_hi,count\n";
      for (std::size_t i = 0; i < h.counts.size(); ++i) {
        csv << fmt_double(h.edges[i]) << ',' << fmt_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
      }
      files.emplace_back("score_hist.csv", csv.str());
      files.emplace_back("score_hist.svg", histogram_svg(h, "summed visual dependence per sample"));
    }
    const auto out = resolve_out(pl_c);
    for (const auto& [name, text] : files) write_text(out / name, text);
    write_run(out, "plot", pl_c,
              {{"traces", pl_traces}, {"manifest", pl_manifest}, {"bins", pl_bins}, {"max_plots", pl_max}}, args);
    return 0;
  }

  if (*replay) {
    std::ifstream in(rp_file);
    if (!in) throw DataError("cannot open " + rp_file);
    const auto j = json::parse(in);
    auto rec = j.at("args").get<std::vector<std::string>>();
    if (rec.empty() || rec.front() == "replay") throw DataError("run.json does not record a replayable command");
    std::vector<char*> av{argv[0]};
    for (auto& a : rec) av.push_back(a.data());
    return run(static_cast<int>(av.size()), av.data());
  }
  return 0;
}

}  // namespace
