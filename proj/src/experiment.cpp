#include "conceptlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"

namespace fs = std::filesystem;

namespace conceptlab {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const GrammarError*>(&e)) return kExitConfig;
  if (dynamic_cast<const TransportError*>(&e)) return kExitTransport;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const BudgetExceeded*>(&e)) {
    return kExitData;
  }
  return kExitFailure;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  // splitmix64 finalizer over the mixed inputs
  std::uint64_t z = seed ^ stable_hash(tag);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- config ----------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, std::string base_dir) {
  ExperimentConfig c;
  c.base_dir = std::move(base_dir);
  try {
    if (!j.contains("seed")) throw ConfigError("config needs a seed");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.rules = j.at("rules").get<std::string>();
    c.vocab = j.value("vocab", c.vocab);
    c.lists_dir = j.value("lists_dir", c.lists_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.human = j.value("human", c.human);
    c.prompt_mode = j.value("prompt_mode", c.prompt_mode);
    c.n_sets = j.value("n_sets", c.n_sets);
    c.jobs = j.value("jobs", c.jobs);
    c.held_out = j.value("held_out", c.held_out);
    if (j.contains("split_seed")) c.split_seed = j.at("split_seed").get<std::uint64_t>();
    c.subsamples = j.value("subsamples", c.subsamples);
    if (j.contains("learner")) {
      const auto& l = j.at("learner");
      auto& s = c.learner;
      s.name = l.value("name", s.name);
      s.grammar = l.value("grammar", s.grammar);
      s.max_size = l.value("max_size", s.max_size);
      s.alpha = l.value("alpha", s.alpha);
      s.beta = l.value("beta", s.beta);
      s.engine = l.value("engine", s.engine);
      s.mh_iterations = l.value("mh_iterations", s.mh_iterations);
      s.mh_burn_in = l.value("mh_burn_in", s.mh_burn_in);
      s.posterior_top_k = l.value("posterior_top_k", s.posterior_top_k);
      s.fit_step = l.value("fit_step", s.fit_step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  NoiseParams{c.learner.alpha, c.learner.beta}.validate();
  if (c.learner.engine != "enumerate" && c.learner.engine != "mh") {
    throw ConfigError("learner.engine must be enumerate or mh");
  }
  if (c.learner.max_size < 1) throw ConfigError("learner.max_size must be positive");
  if (c.n_sets < 1) throw ConfigError("n_sets must be positive");
  parse_prompt_mode(c.prompt_mode);
  if (!fs::exists(c.resolve(c.rules))) throw ConfigError("rules manifest not found: " + c.resolve(c.rules));
  for (const auto* p : {&c.vocab, &c.endpoint, &c.human, &c.learner.grammar}) {
    if (!p->empty() && !fs::exists(c.resolve(*p))) throw ConfigError("file not found: " + c.resolve(*p));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j, fs::path(path).parent_path().string());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"seed", seed},         {"rules", rules},         {"vocab", vocab},
                   {"lists_dir", lists_dir}, {"output_dir", output_dir}, {"endpoint", endpoint},
                   {"human", human},       {"prompt_mode", prompt_mode}, {"n_sets", n_sets},
                   {"jobs", jobs},         {"held_out", held_out},   {"subsamples", subsamples}};
  if (split_seed) j["split_seed"] = *split_seed;
  j["learner"] = {{"name", learner.name},
                  {"grammar", learner.grammar},
                  {"max_size", learner.max_size},
                  {"alpha", learner.alpha},
                  {"beta", learner.beta},
                  {"engine", learner.engine},
                  {"mh_iterations", learner.mh_iterations},
                  {"mh_burn_in", learner.mh_burn_in},
                  {"posterior_top_k", learner.posterior_top_k},
                  {"fit_step", learner.fit_step}};
  return j;
}

std::string ExperimentConfig::resolve(const std::string& path) const {
  if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / path).string();
}

std::string ExperimentConfig::out(const std::string& rel) const {
  return (fs::path(resolve(output_dir)) / rel).string();
}

FeatureVocab ExperimentConfig::load_vocab() const {
  return vocab.empty() ? FeatureVocab() : FeatureVocab::load(resolve(vocab));
}

RuleManifest ExperimentConfig::load_rules() const { return load_manifest(resolve(rules), load_vocab()); }

std::string ExperimentConfig::list_path(const std::string& rule_id) const {
  return (fs::path(resolve(lists_dir)) / (rule_id + ".json")).string();
}

namespace {

std::string hash_or_default(const ExperimentConfig& cfg, const std::string& path) {
  return path.empty() ? "default" : sha256_file(cfg.resolve(path));
}

nlohmann::json input_hashes(const ExperimentConfig& cfg) {
  nlohmann::json j{{"rules", sha256_file(cfg.resolve(cfg.rules))},
                   {"vocab", hash_or_default(cfg, cfg.vocab)},
                   {"grammar", hash_or_default(cfg, cfg.learner.grammar)},
                   {"config", sha256_hex(cfg.to_json().dump())}};
  if (!cfg.endpoint.empty()) j["endpoint"] = sha256_file(cfg.resolve(cfg.endpoint));
  if (!cfg.human.empty()) j["human"] = sha256_file(cfg.resolve(cfg.human));
  return j;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct RuleStatus {
  std::string state = "pending";  // ok, skipped, failed
  std::string message;
  int code = kExitOk;
};

int worst(int a, int b) {
  if (a == kExitOk) return b;
  if (b == kExitOk) return a;
  return std::max(a, b);
}

std::string opt_bool(const std::optional<bool>& b) { return b ? (*b ? "True" : "False") : ""; }
std::string opt_double(const std::optional<double>& d) { return d ? format_double(*d) : ""; }

std::optional<bool> parse_opt_bool(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (auto b = parse_boolean(s)) return b;
  throw DataError("bad boolean field '" + s + "'");
}

std::optional<double> parse_opt_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DataError("bad number '" + s + "'");
  }
}

std::vector<std::string> split_tsv(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (out.size() + 1 < max_fields) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  out.push_back(line.substr(start));
  return out;
}

LabelSeries series_of_subject(const SubjectRecord& s, const ExemplarList& list) {
  LabelSeries out;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < list.sets.size(); ++k) {
    for (std::size_t i = 0; i < list.sets[k].objects.size(); ++i, ++flat) {
      LabelRecord r;
      r.set_index = k;
      r.object_index = i;
      r.gold = list.sets[k].labels[i];
      if (flat < s.responses.size()) r.model = s.responses[flat];
      out.push_back(r);
    }
  }
  return out;
}

std::optional<double> safe_accuracy(const LabelSeries& s, Window w) {
  try {
    return accuracy(s, w);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::vector<std::string> sorted_children(const fs::path& dir, bool directories, const std::string& ext = "") {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ext)) {
      out.push_back(directories ? e.path().filename().string() : e.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct HumanRule {
  ExemplarList list;
  std::vector<SubjectRecord> kept;
  FilterReport report;
  std::vector<std::optional<double>> proportions;
};

// Human data per rule (only rules with a list and at least one subject).
std::map<std::string, HumanRule> load_human(const ExperimentConfig& cfg, const RuleManifest& manifest,
                                            std::ostream& log) {
  std::map<std::string, HumanRule> out;
  if (cfg.human.empty()) return out;
  auto rows = read_human_csv(cfg.resolve(cfg.human));
  std::set<std::string> with_rows;
  for (const auto& r : rows) with_rows.insert(r.rule_id);
  for (const auto& rule : manifest.rules) {
    if (!with_rows.count(rule.id)) continue;
    if (!fs::exists(cfg.list_path(rule.id))) {
      log << "warning: human data for " << rule.id << " but no list file\n";
      continue;
    }
    HumanRule h{load_list(cfg.list_path(rule.id)), {}, {}, {}};
    auto subjects = assemble_subjects(rows, h.list);
    try {
      auto filtered = filter_subjects(subjects, h.list);
      h.kept = std::move(filtered.kept);
      h.report = std::move(filtered.report);
    } catch (const DataError& e) {
      log << "warning: " << rule.id << ": " << e.what() << "\n";
      continue;
    }
    h.proportions = human_proportions(h.kept, h.list).proportions();
    out.emplace(rule.id, std::move(h));
  }
  return out;
}

void write_map_file(const std::string& path, const std::string& rule_id, const std::vector<MapEntry>& entries,
                    const FeatureVocab& vocab) {
  std::string text;
  for (const auto& e : entries) {
    text += rule_id + "\t" + std::to_string(e.set_index) + "\t" + to_string(e.rule, vocab) + "\n";
  }
  write_file_atomic(path, text);
}

}  // namespace

// ---- series files ----------------------------------------------------------

void write_series_csv(const std::string& path, const std::vector<SeriesRow>& rows) {
  std::string text = "set_index,object_index,object,gold,label,p_true,reason\n";
  for (const auto& r : rows) {
    text += std::to_string(r.record.set_index) + "," + std::to_string(r.record.object_index) + "," +
            csv_escape(r.object) + "," + (r.record.gold ? "True" : "False") + "," + opt_bool(r.record.model) +
            "," + opt_double(r.record.p_true) + "," + csv_escape(r.reason) + "\n";
  }
  write_file_atomic(path, text);
}

LabelSeries read_series_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty series file");
  LabelSeries out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 7) throw DataError(path + ":" + std::to_string(lineno) + ": expected 7 fields");
    try {
      LabelRecord r;
      r.set_index = std::stoul(f[0]);
      r.object_index = std::stoul(f[1]);
      auto gold = parse_opt_bool(f[3]);
      if (!gold) throw DataError("missing gold label");
      r.gold = *gold;
      r.model = parse_opt_bool(f[4]);
      r.p_true = parse_opt_double(f[5]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad index");
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate_series(out);
  return out;
}

// ---- learner ---------------------------------------------------------------

Grammar load_grammar(const ExperimentConfig& cfg, const FeatureVocab& vocab) {
  return cfg.learner.grammar.empty() ? Grammar::default_fol(vocab) : Grammar::load(cfg.resolve(cfg.learner.grammar), vocab);
}

PlotRun run_plot_rule(const ExemplarList& list, const Grammar& g, const std::vector<PriorHypothesis>* support,
                      const LearnerSettings& settings, std::uint64_t seed) {
  const NoiseParams noise{settings.alpha, settings.beta};
  noise.validate();
  const bool exact = settings.engine == "enumerate";
  if (exact && !support) throw ConfigError("enumerate engine needs a hypothesis space");
  PlotRun run;
  std::string dump = "set_index,rank,concept,log_prior,log_likelihood,log_posterior\n";
  PosteriorState state = exact ? PosteriorState::from_prior(*support) : PosteriorState{};

  for (std::size_t k = 0; k <= list.sets.size(); ++k) {
    if (!exact) {
      McmcOptions opt;
      opt.iterations = settings.mh_iterations;
      opt.burn_in = settings.mh_burn_in;
      opt.max_size = settings.max_size;
      opt.seed = derive_seed(seed, "set:" + std::to_string(k));
      state = mh_sample(g, evidence_before(list, k), noise, opt).state;
    }
    run.map_rules.push_back({k, map_rule(state, g.vocab())});

    const auto& hs = state.hypotheses();
    std::vector<std::size_t> order(hs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min(settings.posterior_top_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (hs[a].log_posterior != hs[b].log_posterior) return hs[a].log_posterior > hs[b].log_posterior;
                        return a < b;
                      });
    for (std::size_t r = 0; r < top; ++r) {
      const auto& h = hs[order[r]];
      dump += std::to_string(k) + "," + std::to_string(r + 1) + "," + csv_escape(to_string(h.rule, g.vocab())) +
              "," + format_double(h.log_prior) + "," + format_double(h.log_likelihood) + "," +
              format_double(h.log_posterior) + "\n";
    }
    if (k == list.sets.size()) break;

    const auto& set = list.sets[k];
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < set.objects.size(); ++i) {
      Context ctx = set.context(i);
      SeriesRow row;
      row.record.set_index = k;
      row.record.object_index = i;
      row.record.gold = set.labels[i];
      row.record.p_true = posterior_predictive(state, ctx, noise);
      row.record.model = classify(*row.record.p_true);
      row.object = describe(set.objects[i], list.vocab);
      run.rows.push_back(std::move(row));
      obs.push_back({ctx, static_cast<bool>(set.labels[i])});
    }
    if (exact) state.observe(obs, noise);
  }
  run.posterior_csv = std::move(dump);
  return run;
}

// ---- gen -------------------------------------------------------------------

int cmd_gen(const ExperimentConfig& cfg, std::ostream& log) {
  const FeatureVocab vocab = cfg.load_vocab();
  const RuleManifest manifest = load_manifest(cfg.resolve(cfg.rules), vocab);
  int code = kExitOk;
  for (const auto& e : manifest.errors) {
    log << "error: manifest line " << e.line << (e.rule_id.empty() ? "" : " (" + e.rule_id + ")") << ": "
        << e.message << "\n";
    code = kExitData;
  }
  if (manifest.rules.empty()) {
    log << "warning: manifest has no rules; nothing generated\n";
    return code;
  }
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& r : manifest.rules) {
    ExemplarList list =
        generate_list(r.id, r.source, r.rule, vocab, derive_seed(cfg.seed, "list:" + r.id), cfg.n_sets);
    save_list(list, cfg.list_path(r.id));
    hashes[r.id] = sha256_file(cfg.list_path(r.id));
  }
  nlohmann::json m{{"command", "gen"}, {"inputs", input_hashes(cfg)}, {"lists", hashes}};
  write_file_atomic((fs::path(cfg.resolve(cfg.lists_dir)) / "MANIFEST.json").string(), m.dump(1) + "\n");
  log << "generated " << manifest.rules.size() << " lists in " << cfg.resolve(cfg.lists_dir) << "\n";
  return code;
}

// ---- run -------------------------------------------------------------------

int cmd_run(const ExperimentConfig& cfg, const std::string& engine, std::ostream& log, bool force,
            TransportFactory transport) {
  if (engine != "plot" && engine != "llm") throw ConfigError("engine must be plot or llm");
  const FeatureVocab vocab = cfg.load_vocab();
  const RuleManifest manifest = load_manifest(cfg.resolve(cfg.rules), vocab);

  std::optional<Grammar> grammar;
  std::vector<PriorHypothesis> support;
  std::optional<EndpointConfig> endpoint;
  std::unique_ptr<RateLimiter> limiter;
  std::unique_ptr<ResponseCache> cache;
  PromptMode mode = parse_prompt_mode(cfg.prompt_mode);
  std::string model;

  if (engine == "plot") {
    grammar.emplace(load_grammar(cfg, vocab));
    if (cfg.learner.engine == "enumerate") support = enumerate_hypotheses(*grammar, cfg.learner.max_size);
    model = cfg.learner.name;
    log << "learner " << model << ": " << cfg.learner.engine
        << (cfg.learner.engine == "enumerate" ? " over " + std::to_string(support.size()) + " hypotheses" : "")
        << "\n";
  } else {
    if (cfg.endpoint.empty()) throw ConfigError("the llm engine needs an endpoint config");
    try {
      endpoint = EndpointConfig::from_json(nlohmann::json::parse(read_file(cfg.resolve(cfg.endpoint))));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(cfg.endpoint + ": " + e.what());
    }
    if (!endpoint->credential_env.empty()) {
      const char* token = std::getenv(endpoint->credential_env.c_str());
      if (!token || !*token) throw ConfigError("credential variable " + endpoint->credential_env + " is not set");
    }
    model = endpoint->name;
    limiter = std::make_unique<RateLimiter>(endpoint->requests_per_second);
    cache = std::make_unique<ResponseCache>(cfg.out("cache/" + model));
    if (!transport) transport = [](const EndpointConfig& e) { return std::make_unique<HttpTransport>(e); };
  }

  std::vector<RuleStatus> status(manifest.rules.size());
  std::mutex log_mu;
  parallel_for(manifest.rules.size(), cfg.jobs, [&](std::size_t i) {
    const auto& rule = manifest.rules[i];
    const std::string series_path = cfg.out("series/" + model + "/" + rule.id + ".csv");
    auto& st = status[i];
    if (!force && fs::exists(series_path)) {
      st.state = "skipped";
      return;
    }
    try {
      ExemplarList list = load_list(cfg.list_path(rule.id));
      if (engine == "plot") {
        PlotRun run = run_plot_rule(list, *grammar, &support, cfg.learner, derive_seed(cfg.seed, "plot:" + rule.id));
        write_map_file(cfg.out("map/" + model + "/" + rule.id + ".tsv"), rule.id, run.map_rules, vocab);
        write_file_atomic(cfg.out("posterior/" + model + "/" + rule.id + ".csv"), run.posterior_csv);
        write_series_csv(series_path, run.rows);
      } else {
        auto t = transport(*endpoint);
        LlmClient client(*endpoint, *t, cache.get(), limiter.get());
        if (force) fs::remove(cfg.out("transcripts/" + model + "/" + rule.id + ".json"));
        SessionTranscript tr =
            run_session(list, client, mode, cfg.out("transcripts/" + model + "/" + rule.id + ".json"));
        std::vector<SeriesRow> rows;
        std::string elicited;
        for (const auto& s : tr.sets) {
          for (std::size_t k = 0; k < s.objects.size(); ++k) {
            const auto& o = s.objects[k];
            SeriesRow row;
            row.record.set_index = s.set_index;
            row.record.object_index = k;
            row.record.gold = o.gold;
            row.record.model = o.label;
            row.record.p_true = o.p_true;
            row.object = o.object;
            row.reason = o.reason;
            rows.push_back(std::move(row));
          }
          if (s.rule_text) elicited += rule.id + "\t" + std::to_string(s.set_index) + "\t" + *s.rule_text + "\n";
        }
        if (mode == PromptMode::ChatElicitation) {
          write_file_atomic(cfg.out("elicited/" + model + "/" + rule.id + ".tsv"), elicited);
        }
        write_series_csv(series_path, rows);
        std::lock_guard lock(log_mu);
        log << rule.id << ": " << tr.labeled() << " labeled, " << tr.excluded() << " excluded, "
            << client.stats().network_calls << " requests\n";
      }
      st.state = "ok";
    } catch (const std::exception& e) {
      st.state = "failed";
      st.message = e.what();
      st.code = exit_code_for(e);
      std::lock_guard lock(log_mu);
      log << "error: " << rule.id << ": " << e.what() << "\n";
    }
  });

  int code = kExitOk;
  nlohmann::json rules = nlohmann::json::object();
  std::size_t ok = 0, skipped = 0, failed = 0;
  for (std::size_t i = 0; i < status.size(); ++i) {
    const auto& st = status[i];
    rules[manifest.rules[i].id] = st.message.empty() ? nlohmann::json{{"state", st.state}}
                                                     : nlohmann::json{{"state", st.state}, {"error", st.message}};
    code = worst(code, st.code);
    ok += st.state == "ok";
    skipped += st.state == "skipped";
    failed += st.state == "failed";
  }
  nlohmann::json m{{"command", "run"}, {"engine", engine}, {"model", model},
                   {"inputs", input_hashes(cfg)}, {"rules", rules}};
  if (endpoint) m["endpoint"] = endpoint->fingerprint();
  write_file_atomic(cfg.out("runs/" + model + ".json"), m.dump(1) + "\n");
  log << model << ": " << ok << " run, " << skipped << " skipped, " << failed << " failed\n";
  return code;
}

// ---- grade -----------------------------------------------------------------

int cmd_grade(const ExperimentConfig& cfg, const std::string& concepts, const std::string& series_dir,
              std::ostream& log) {
  const FeatureVocab vocab = cfg.load_vocab();
  struct Reported {
    std::size_t set_index;
    std::string text;
    std::optional<Concept> rule;
  };
  std::map<std::string, std::vector<Reported>> by_rule;
  std::vector<std::string> unparseable;
  {
    std::istringstream in(read_file(concepts));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty() || trim(line)[0] == '#') continue;
      auto f = split_tsv(line, 3);
      if (f.size() != 3) {
        log << "error: " << concepts << ":" << lineno << ": expected rule_id<TAB>set_index<TAB>concept\n";
        unparseable.push_back(std::to_string(lineno));
        continue;
      }
      Reported r{0, trim(f[2]), std::nullopt};
      try {
        r.set_index = std::stoul(f[1]);
      } catch (const std::exception&) {
        throw DataError(concepts + ":" + std::to_string(lineno) + ": bad set index");
      }
      try {
        r.rule = parse_concept(r.text, vocab);
      } catch (const Error& e) {
        unparseable.push_back(f[0] + "@" + f[1]);
        log << "unparseable: " << f[0] << " set " << f[1] << ": " << e.what() << "\n";
      }
      by_rule[trim(f[0])].push_back(std::move(r));
    }
  }

  const std::string name = fs::path(concepts).stem().string();
  std::string per_set = "rule_id,set_index,concept,parsed,likelihood_num,likelihood_den,likelihood,consistency_num,consistency_den,consistency\n";
  std::vector<std::unique_ptr<ExemplarList>> lists;
  std::vector<FinalRule> finals;
  std::size_t lik_num = 0, lik_den = 0, con_num = 0, con_den = 0;
  int code = kExitOk;
  for (auto& [rule_id, entries] : by_rule) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.set_index < b.set_index; });
    if (!fs::exists(cfg.list_path(rule_id))) {
      log << "error: no list for " << rule_id << "\n";
      code = kExitData;
      continue;
    }
    lists.push_back(std::make_unique<ExemplarList>(load_list(cfg.list_path(rule_id))));
    const ExemplarList& list = *lists.back();
    std::map<std::pair<std::size_t, std::size_t>, bool> labels;
    if (!series_dir.empty()) {
      const auto path = (fs::path(series_dir) / (rule_id + ".csv")).string();
      if (fs::exists(path)) {
        for (const auto& r : read_series_csv(path)) {
          if (r.model) labels[{r.set_index, r.object_index}] = *r.model;
        }
      }
    }
    for (const auto& e : entries) {
      std::string row = csv_escape(rule_id) + "," + std::to_string(e.set_index) + "," + csv_escape(e.text) + "," +
                        (e.rule ? "True" : "False");
      Fraction lik{0, 0}, con{0, 0};
      if (e.rule) {
        lik = rule_likelihood(*e.rule, evidence_before(list, std::min(e.set_index, list.sets.size())));
        if (e.set_index < list.sets.size()) {
          std::vector<ConsistencyItem> items;
          const auto& set = list.sets[e.set_index];
          for (std::size_t i = 0; i < set.objects.size(); ++i) {
            auto it = labels.find({e.set_index, i});
            if (it != labels.end()) items.push_back({*e.rule, set.context(i), it->second});
          }
          con = consistency(items);
        }
      }
      lik_num += lik.num;
      lik_den += lik.den;
      con_num += con.num;
      con_den += con.den;
      auto frac = [](const Fraction& f) {
        return std::to_string(f.num) + "," + std::to_string(f.den) + "," + (f.den ? format_double(f.value()) : "");
      };
      per_set += row + "," + frac(lik) + "," + frac(con) + "\n";
    }
    finals.push_back({rule_id, entries.back().rule, &list});
  }

  MatchSummary summary = match_rate(finals);
  std::string final_csv = "rule_id,likelihood,likelihood_match,equivalent\n";
  for (const auto& v : summary.verdicts) {
    final_csv += csv_escape(v.rule_id) + "," + (v.likelihood.den ? format_double(v.likelihood.value()) : "") + "," +
                 (v.likelihood_match ? "True" : "False") + "," + opt_bool(v.equivalent) + "\n";
  }
  nlohmann::json s{{"rules", finals.size()},
                   {"likelihood_match_rate", summary.likelihood_match_rate},
                   {"equivalence_match_rate", summary.equivalence_match_rate},
                   {"mean_likelihood", lik_den ? nlohmann::json(static_cast<double>(lik_num) / lik_den) : nlohmann::json()},
                   {"consistency", con_den ? nlohmann::json(static_cast<double>(con_num) / con_den) : nlohmann::json()},
                   {"unparseable", unparseable},
                   {"inputs", input_hashes(cfg)},
                   {"concepts", sha256_file(concepts)}};
  write_file_atomic(cfg.out("grade/" + name + "/per_set.csv"), per_set);
  write_file_atomic(cfg.out("grade/" + name + "/final.csv"), final_csv);
  write_file_atomic(cfg.out("grade/" + name + "/summary.json"), s.dump(1) + "\n");
  log << "graded " << finals.size() << " rules: likelihood match " << summary.likelihood_match_rate
      << ", equivalence match " << summary.equivalence_match_rate << "\n";
  return code;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  const FeatureVocab vocab = cfg.load_vocab();
  const RuleManifest manifest = load_manifest(cfg.resolve(cfg.rules), vocab);
  auto human = load_human(cfg, manifest, log);
  const bool have_human = !human.empty();

  struct RuleScore {
    std::string rule_id;
    RuleType type;
    LabelSeries series;
    std::optional<double> overall, last_quarter;
  };
  std::map<std::string, std::vector<RuleScore>> models;
  const fs::path series_root = cfg.out("series");
  for (const auto& model : sorted_children(series_root, true)) {
    for (const auto& rule_id : sorted_children(series_root / model, false, ".csv")) {
      const RuleEntry* entry = manifest.find(rule_id);
      if (!entry) {
        log << "warning: " << model << "/" << rule_id << " is not in the manifest; skipped\n";
        continue;
      }
      RuleScore s{rule_id, entry->type, read_series_csv((series_root / model / (rule_id + ".csv")).string()), {}, {}};
      s.overall = safe_accuracy(s.series, Window::Overall);
      s.last_quarter = safe_accuracy(s.series, Window::LastQuarter);
      models[model].push_back(std::move(s));
    }
  }
  if (models.empty()) throw DataError("no label series under " + series_root.string());

  // Mean per-rule accuracy by rule class and window.
  auto in_class = [](RuleType t, int cls) {
    return cls == 0 || (cls == 1 && t == RuleType::Propositional) || (cls == 2 && t == RuleType::FirstOrder);
  };
  std::string table = "model,n_rules,n_prop,n_fol,all_overall,all_last_quarter,prop_overall,prop_last_quarter,fol_overall,fol_last_quarter";
  if (have_human) table += ",all_overall_sd,all_last_quarter_sd,prop_overall_sd,prop_last_quarter_sd,fol_overall_sd,fol_last_quarter_sd";
  table += "\n";
  for (const auto& [model, scores] : models) {
    std::size_t n_prop = 0, n_fol = 0;
    for (const auto& s : scores) (s.type == RuleType::Propositional ? n_prop : n_fol)++;
    table += csv_escape(model) + "," + std::to_string(scores.size()) + "," + std::to_string(n_prop) + "," +
             std::to_string(n_fol);
    for (int cls = 0; cls < 3; ++cls) {
      for (bool lq : {false, true}) {
        std::vector<double> v;
        for (const auto& s : scores) {
          const auto& a = lq ? s.last_quarter : s.overall;
          if (in_class(s.type, cls) && a) v.push_back(*a);
        }
        table += "," + (v.empty() ? std::string() : format_double(mean_sd(v).mean));
      }
    }
    if (have_human) table += ",,,,,,";
    table += "\n";
  }

  // Human subject accuracies per rule.
  struct HumanScores {
    std::vector<double> overall, last_quarter;
    std::vector<LabelSeries> series;
  };
  std::map<std::string, HumanScores> hs;
  for (const auto& [rule_id, h] : human) {
    auto& out = hs[rule_id];
    for (const auto& subj : h.kept) {
      LabelSeries s = series_of_subject(subj, h.list);
      if (auto a = safe_accuracy(s, Window::Overall)) out.overall.push_back(*a);
      if (auto a = safe_accuracy(s, Window::LastQuarter)) out.last_quarter.push_back(*a);
      out.series.push_back(std::move(s));
    }
  }
  if (have_human) {
    std::size_t n_prop = 0, n_fol = 0;
    for (const auto& [rule_id, _] : hs) (manifest.find(rule_id)->type == RuleType::Propositional ? n_prop : n_fol)++;
    std::string means, sds;
    for (int cls = 0; cls < 3; ++cls) {
      for (bool lq : {false, true}) {
        std::vector<MeanSd> per_rule;
        for (const auto& [rule_id, s] : hs) {
          const auto& v = lq ? s.last_quarter : s.overall;
          if (in_class(manifest.find(rule_id)->type, cls) && !v.empty()) per_rule.push_back(mean_sd(v));
        }
        if (per_rule.empty()) {
          means += ",";
          sds += ",";
          continue;
        }
        MeanSd agg = propagated_baseline(per_rule);
        means += "," + format_double(agg.mean);
        sds += "," + format_double(agg.sd);
      }
    }
    table += "human," + std::to_string(hs.size()) + "," + std::to_string(n_prop) + "," + std::to_string(n_fol) +
             means + sds + "\n";
  }
  write_file_atomic(cfg.out("report/table1.csv"), table);

  // Trajectories.
  std::string traj = "rule_id,cohort,set_index,mean_accuracy,members,chance\n";
  std::map<std::string, ExemplarList> lists;
  auto list_for = [&](const std::string& id) -> const ExemplarList& {
    auto it = lists.find(id);
    if (it == lists.end()) it = lists.emplace(id, load_list(cfg.list_path(id))).first;
    return it->second;
  };
  auto emit_traj = [&](const std::string& rule_id, const TrajectoryReport& rep) {
    for (const auto& p : rep.points) {
      traj += csv_escape(rule_id) + "," + csv_escape(rep.cohort) + "," + std::to_string(p.set_index) + "," +
              format_double(p.mean_accuracy) + "," + std::to_string(p.members) + "," + format_double(rep.chance) + "\n";
    }
  };
  for (const auto& [model, scores] : models) {
    for (const auto& s : scores) {
      if (!fs::exists(cfg.list_path(s.rule_id))) continue;
      std::vector<LabelSeries> one{s.series};
      emit_traj(s.rule_id, trajectory(model, one, list_for(s.rule_id)));
    }
  }
  for (const auto& [rule_id, s] : hs) emit_traj(rule_id, trajectory("human", s.series, human.at(rule_id).list));
  write_file_atomic(cfg.out("report/trajectories.csv"), traj);

  nlohmann::json summary{{"command", "report"}, {"inputs", input_hashes(cfg)}, {"models", nlohmann::json::object()}};
  if (have_human) {
    // Per-rule comparison against the human last-quarter distribution.
    std::string deltas = "model,rule_id,type,model_last_quarter,human_median,human_q25,human_q75,human_p20,human_p10,human_p01,delta,band\n";
    std::string r2 = "model,n,r,r_squared\n";
    for (const auto& [model, scores] : models) {
      std::vector<RuleCohort> cohorts;
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& s : scores) {
        auto it = hs.find(s.rule_id);
        if (it == hs.end() || it->second.last_quarter.empty()) continue;
        cohorts.push_back({s.rule_id, it->second.last_quarter, s.last_quarter});
        const auto& props = human.at(s.rule_id).proportions;
        for (std::size_t i = 0; i < s.series.size() && i < props.size(); ++i) {
          if (s.series[i].p_true && props[i]) {
            xs.push_back(*s.series[i].p_true);
            ys.push_back(*props[i]);
          }
        }
      }
      CohortReport rep = cohort_report(cohorts, cfg.subsamples, derive_seed(cfg.seed, "subsample"));
      for (const auto& row : rep.rows) {
        deltas += csv_escape(model) + "," + csv_escape(row.rule_id) + "," +
                  std::string(rule_type_name(manifest.find(row.rule_id)->type)) + "," + opt_double(row.model) + "," +
                  format_double(row.human.median) + "," + format_double(row.human.q25) + "," +
                  format_double(row.human.q75) + "," + format_double(row.human.p20) + "," +
                  format_double(row.human.p10) + "," + format_double(row.human.p01) + "," + opt_double(row.delta) +
                  "," + std::to_string(row.band) + "\n";
      }
      nlohmann::json ms{{"rules_compared", cohorts.size()},
                        {"subsample_bottom_quartile_mean", rep.subsample_bottom_quartile.mean},
                        {"subsample_bottom_quartile_sd", rep.subsample_bottom_quartile.sd}};
      ms["model_bottom_quartile_rate"] =
          rep.model_bottom_quartile_rate ? nlohmann::json(*rep.model_bottom_quartile_rate) : nlohmann::json();
      try {
        Correlation c = r_squared(std::span<const double>(xs), std::span<const double>(ys));
        r2 += csv_escape(model) + "," + std::to_string(c.n) + "," + format_double(c.r) + "," + format_double(c.r_squared) + "\n";
        ms["r_squared"] = c.r_squared;
      } catch (const DataError& e) {
        r2 += csv_escape(model) + "," + std::to_string(xs.size()) + ",,\n";
        ms["r_squared"] = nullptr;
      }
      summary["models"][model] = ms;
    }
    write_file_atomic(cfg.out("report/deltas.csv"), deltas);
    write_file_atomic(cfg.out("report/r2.csv"), r2);
    nlohmann::json excl = nlohmann::json::object();
    for (const auto& [rule_id, h] : human) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& e : h.report.exclusions) list.push_back({{"subject", e.subject_id}, {"reason", e.reason}});
      excl[rule_id] = {{"kept", h.kept.size()}, {"excluded", list}};
    }
    summary["human"] = excl;
  } else {
    log << "no human data: model-only accuracy columns\n";
  }
  write_file_atomic(cfg.out("report/report.json"), summary.dump(1) + "\n");
  log << "report written to " << cfg.out("report") << "\n";
  return kExitOk;
}

// ---- split / fit-noise -----------------------------------------------------

int cmd_split(const ExperimentConfig& cfg, std::ostream& log) {
  const RuleManifest manifest = cfg.load_rules();
  std::vector<std::string> ids;
  for (const auto& r : manifest.rules) ids.push_back(r.id);
  RuleSplit split = split_rules(ids, cfg.held_out, cfg.split_seed.value_or(cfg.seed));
  nlohmann::json j = to_json(split);
  j["inputs"] = input_hashes(cfg);
  write_file_atomic(cfg.out("split.json"), j.dump(1) + "\n");
  log << split.train.size() << " training rules, " << split.held_out.size() << " held out\n";
  return kExitOk;
}

int cmd_fit_noise(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.human.empty()) throw ConfigError("fit-noise needs human data");
  const FeatureVocab vocab = cfg.load_vocab();
  const RuleManifest manifest = load_manifest(cfg.resolve(cfg.rules), vocab);
  auto human = load_human(cfg, manifest, log);

  std::set<std::string> train;
  if (fs::exists(cfg.out("split.json"))) {
    auto j = nlohmann::json::parse(read_file(cfg.out("split.json")));
    for (const auto& id : j.at("train")) train.insert(id.get<std::string>());
    log << "fitting on the " << train.size() << " training rules of split.json\n";
  }
  std::vector<TrainingList> lists;
  std::vector<std::string> used;
  for (const auto& [rule_id, h] : human) {
    if (!train.empty() && !train.count(rule_id)) continue;
    lists.push_back({&h.list, h.proportions});
    used.push_back(rule_id);
  }
  if (lists.empty()) throw DataError("no training rules with human data");

  Grammar g = load_grammar(cfg, vocab);
  auto support = enumerate_hypotheses(g, cfg.learner.max_size);
  NoiseFit fit = fit_noise(support, lists, NoiseGrid::lattice(cfg.learner.fit_step));
  std::string grid = "alpha,beta,r_squared\n";
  for (const auto& s : fit.scores) {
    grid += format_double(s.noise.alpha) + "," + format_double(s.noise.beta) + "," + opt_double(s.r_squared) + "\n";
  }
  nlohmann::json j{{"alpha", fit.best.alpha}, {"beta", fit.best.beta}, {"r_squared", fit.r_squared},
                   {"rules", used},          {"hypotheses", support.size()}, {"inputs", input_hashes(cfg)}};
  write_file_atomic(cfg.out("fit/grid.csv"), grid);
  write_file_atomic(cfg.out("fit/noise.json"), j.dump(1) + "\n");
  log << "best alpha " << fit.best.alpha << ", beta " << fit.best.beta << ", R^2 " << fit.r_squared << "\n";
  return kExitOk;
}

}  // namespace conceptlab
