// bltd: train, generate with four inference engines, benchmark, score, and
// inspect entropy patching for byte-level hierarchical models.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bltd/checkpoint.hpp"
#include "bltd/engines.hpp"
#include "bltd/metrics.hpp"
#include "bltd/runconfig.hpp"

namespace {

constexpr int kExitUsage = 2;    // invalid config or flag combination
constexpr int kExitInput = 3;    // unreadable input file
constexpr int kExitDiverged = 4;

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

// Backslash escapes for prompt/candidate lines: \n \t \r \\ \xHH.
std::string unescape(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 >= s.size()) {
      out.push_back(s[i]);
      continue;
    }
    char c = s[++i];
    switch (c) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      case 'x': {
        if (i + 2 >= s.size()) throw std::runtime_error("bad \\x escape");
        out.push_back(static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16)));
        i += 2;
        break;
      }
      default: throw std::runtime_error(std::string("bad escape \\") + c);
    }
  }
  return out;
}

uint64_t default_seed(std::optional<uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BLTD_SEED")) return std::stoull(env);
  return 0;
}

void print_output(const bltd::ByteSeq& output, size_t prompt_len, bool hex) {
  // Raw mode prints generated raw bytes; specials are only representable in
  // hex mode.
  if (!hex) {
    std::string out;
    for (size_t i = prompt_len; i < output.size(); ++i)
      if (bltd::is_raw_byte(output[i]))
        out.push_back(static_cast<char>(output[i]));
    std::fwrite(out.data(), 1, out.size(), stdout);
    return;
  }
  for (size_t i = prompt_len; i < output.size(); ++i) {
    bltd::Symbol s = output[i];
    if (bltd::is_raw_byte(s))
      std::printf("%02x", s);
    else if (s == bltd::kBos)
      std::printf("[BOS]");
    else if (s == bltd::kEos)
      std::printf("[EOS]");
    else if (s == bltd::kPad)
      std::printf("[PAD]");
    else
      std::printf("[MASK]");
  }
  std::printf("\n");
}

struct GenerateFlags {
  std::string engine;
  int block_size = 8;
  int window = 8;
  std::string strategy = "confidence";
  double alpha = 0.7;
  double gamma = 1.0;
  double top_p = 1.0;
  double temperature = 0;
  int length = 64;
  bool strategy_set = false, alpha_set = false, gamma_set = false,
       top_p_set = false, temperature_set = false, block_set = false,
       window_set = false;
};

bltd::UnmaskingConfig unmask_config(const GenerateFlags& f) {
  bltd::UnmaskingConfig cfg;
  if (f.strategy == "confidence") cfg.strategy = bltd::UnmaskStrategy::kConfidence;
  else if (f.strategy == "eb") cfg.strategy = bltd::UnmaskStrategy::kEntropyBounded;
  else if (f.strategy == "one-step") cfg.strategy = bltd::UnmaskStrategy::kOneStep;
  else throw std::runtime_error("unknown strategy: " + f.strategy);
  cfg.alpha = f.alpha;
  cfg.gamma = f.gamma;
  cfg.top_p = f.top_p;
  cfg.temperature = f.temperature;
  return cfg;
}

// Flag combinations that contradict the engine choice are usage errors.
void validate_engine_flags(const GenerateFlags& f) {
  const bool diffusion = f.engine == "blt-d" || f.engine == "blt-dv";
  if (f.window_set && f.engine != "blt-s")
    throw std::runtime_error("--window is only valid with --engine blt-s");
  if (f.block_set && !diffusion)
    throw std::runtime_error("--block-size requires a diffusion engine");
  if ((f.strategy_set || f.alpha_set || f.gamma_set) && !diffusion)
    throw std::runtime_error("unmasking flags require a diffusion engine");
  if (f.top_p_set &&
      !(f.engine == "blt-d" && f.strategy == "eb"))
    throw std::runtime_error("--top-p is only valid with --engine blt-d --strategy eb");
  if (f.temperature_set && !(f.engine == "blt-d" && f.strategy == "eb"))
    throw std::runtime_error(
        "--temperature is only valid with --engine blt-d --strategy eb");
  if (f.alpha <= 0 || f.alpha > 1)
    throw std::runtime_error("--alpha must lie in (0,1]");
  if (f.gamma <= 0) throw std::runtime_error("--gamma must be > 0");
  if (f.top_p <= 0 || f.top_p > 1)
    throw std::runtime_error("--top-p must lie in (0,1]");
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& out_path, std::optional<uint64_t> seed_flag,
              const std::string& loss_csv, const std::string& resume_path,
              const std::string& state_out) {
  std::map<std::string, std::string> overrides;
  if (seed_flag) overrides["train.seed"] = std::to_string(*seed_flag);
  else if (const char* env = std::getenv("BLTD_SEED"))
    overrides["train.seed"] = env;

  bltd::RunConfig rc;
  try {
    rc = bltd::RunConfig::load(config_path, overrides);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitUsage;
  }
  std::vector<uint8_t> corpus;
  try {
    corpus = read_file_bytes(corpus_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }

  bltd::Checkpoint ckpt;
  bltd::TrainState state;
  bltd::TrainConfig tcfg = rc.train;
  if (!resume_path.empty()) {
    try {
      bltd::load_train_state(resume_path, ckpt, state, tcfg);
    } catch (const std::exception& ex) {
      std::fprintf(stderr, "error: %s\n", ex.what());
      return kExitInput;
    }
  } else {
    std::vector<bltd::ByteSeq> docs(1);
    docs[0].reserve(corpus.size());
    for (uint8_t b : corpus) docs[0].push_back(b);
    ckpt.entropy =
        bltd::fit_entropy_model(docs, rc.patch_order, rc.patch_smoothing);
    ckpt.max_patch = rc.patch_max;
    if (rc.patch_threshold) {
      ckpt.threshold = *rc.patch_threshold;
    } else {
      // calibrate on a bounded sample for speed
      bltd::ByteSeq sample(docs[0].begin(),
                           docs[0].begin() + std::min<size_t>(docs[0].size(), 65536));
      ckpt.threshold = bltd::calibrate_threshold({sample}, ckpt.entropy,
                                                 rc.patch_target_avg, rc.patch_max);
    }
    bltd::Rng rng(tcfg.seed);
    ckpt.model = bltd::init_model(rc.model, rng);
  }

  std::ofstream csv;
  if (!loss_csv.empty()) {
    csv.open(loss_csv);
    csv << "step,l_clean,l_mask,l_total,lr\n";
  }
  bltd::StepCallback cb = nullptr;
  if (csv.is_open())
    cb = [&csv](const bltd::LossRecord& r) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", r.step,
                    static_cast<double>(r.l_clean), static_cast<double>(r.l_mask),
                    static_cast<double>(r.l_total), static_cast<double>(r.lr));
      csv << line;
    };

  bltd::TrainResult result =
      bltd::train(ckpt.model, ckpt.entropy, ckpt.threshold, ckpt.max_patch,
                  corpus, tcfg, &state, cb);
  bltd::save_checkpoint(ckpt, out_path);
  if (!state_out.empty()) bltd::save_train_state(ckpt, state, tcfg, state_out);
  if (!result.ok) {
    std::fprintf(stderr, "error: %s\n", result.error.c_str());
    return kExitDiverged;
  }
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt_text,
                 const std::string& prompt_file, const GenerateFlags& f,
                 std::optional<uint64_t> seed_flag, const std::string& trace_path,
                 bool hex) {
  validate_engine_flags(f);
  bltd::Checkpoint ckpt;
  try {
    ckpt = bltd::load_checkpoint(ckpt_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }
  std::string raw = prompt_text;
  if (!prompt_file.empty()) {
    try {
      auto bytes = read_file_bytes(prompt_file);
      raw.assign(bytes.begin(), bytes.end());
    } catch (const std::exception& ex) {
      std::fprintf(stderr, "error: %s\n", ex.what());
      return kExitInput;
    }
  }
  bltd::ByteSeq prompt = bltd::to_symbols(unescape(raw), true);
  uint64_t seed = default_seed(seed_flag);
  bltd::Engines engines{ckpt.model, ckpt.entropy, ckpt.threshold,
                        ckpt.max_patch};
  bltd::EngineOptions opts;
  opts.seed = seed;

  bltd::DecodeTrace trace;
  std::optional<int> block, window;
  std::optional<bltd::UnmaskingConfig> ucfg;
  if (f.engine == "ar") {
    trace = bltd::generate_ar(engines, prompt, f.length, opts);
  } else if (f.engine == "blt-d") {
    ucfg = unmask_config(f);
    block = f.block_size;
    trace = bltd::generate_blt_d(engines, prompt, f.length, f.block_size, *ucfg, opts);
  } else if (f.engine == "blt-s") {
    window = f.window;
    trace = bltd::generate_blt_s(engines, prompt, f.length, f.window, opts);
  } else if (f.engine == "blt-dv") {
    ucfg = unmask_config(f);
    block = f.block_size;
    trace = bltd::generate_blt_dv(engines, prompt, f.length, f.block_size, *ucfg, opts);
  } else {
    throw std::runtime_error("unknown engine: " + f.engine);
  }

  print_output(trace.output, prompt.size(), hex);
  if (!trace_path.empty()) {
    std::ofstream out(trace_path, std::ios::app);
    out << bltd::trace_to_json(trace, f.engine, block, window, ucfg, seed)
        << "\n";
  }
  return 0;
}

int cmd_score(const std::string& ckpt_path, const std::string& candidates_path) {
  bltd::Checkpoint ckpt;
  try {
    ckpt = bltd::load_checkpoint(ckpt_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }
  std::ifstream in(candidates_path);
  if (!in) {
    std::fprintf(stderr, "error: cannot read file: %s\n", candidates_path.c_str());
    return kExitInput;
  }
  bltd::Engines engines{ckpt.model, ckpt.entropy, ckpt.threshold,
                        ckpt.max_patch};
  std::string line;
  int index = 0, best = 0;
  double best_lp = 0;
  while (std::getline(in, line)) {
    bltd::ByteSeq x = bltd::to_symbols(unescape(line), true);
    double lp = static_cast<double>(bltd::sequence_logprob(engines, x));
    std::printf("%d\t%.6f\n", index, lp);
    if (index == 0 || lp > best_lp) {
      best_lp = lp;
      best = index;
    }
    ++index;
  }
  if (index == 0) {
    std::fprintf(stderr, "error: empty candidates file\n");
    return kExitInput;
  }
  std::printf("argmax\t%d\n", best);
  return 0;
}

struct SweepCell {
  std::string engine;
  GenerateFlags flags;
  std::string label;
};

std::vector<SweepCell> parse_sweep(const std::string& path);

int cmd_bench(const std::string& ckpt_path, const std::string& prompts_path,
              const std::string& sweep_path, const std::string& out_path,
              std::optional<uint64_t> seed_flag) {
  bltd::Checkpoint ckpt;
  std::vector<uint8_t> prompt_bytes;
  try {
    ckpt = bltd::load_checkpoint(ckpt_path);
    prompt_bytes = read_file_bytes(prompts_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }
  std::vector<SweepCell> cells;
  try {
    cells = parse_sweep(sweep_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitUsage;
  }
  std::vector<std::string> prompts;
  {
    std::string text(prompt_bytes.begin(), prompt_bytes.end());
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
      if (!line.empty()) prompts.push_back(unescape(line));
  }
  uint64_t seed = default_seed(seed_flag);
  bltd::Engines engines{ckpt.model, ckpt.entropy, ckpt.threshold,
                        ckpt.max_patch};
  bltd::ComponentParams params = bltd::ComponentParams::from_model(ckpt.model);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    out = &file;
  }
  (*out) << "engine,config,decoder_nfes,encoder_global_nfes,memory_gb,"
            "acceptance_rate,ttr\n";
  for (const SweepCell& cell : cells) {
    for (const std::string& ptext : prompts) {
      bltd::ByteSeq prompt = bltd::to_symbols(ptext, true);
      bltd::EngineOptions opts;
      opts.seed = seed;
      bltd::DecodeTrace trace;
      if (cell.engine == "ar")
        trace = bltd::generate_ar(engines, prompt, cell.flags.length, opts);
      else if (cell.engine == "blt-s")
        trace = bltd::generate_blt_s(engines, prompt, cell.flags.length,
                                     cell.flags.window, opts);
      else if (cell.engine == "blt-d")
        trace = bltd::generate_blt_d(engines, prompt, cell.flags.length,
                                     cell.flags.block_size,
                                     unmask_config(cell.flags), opts);
      else
        trace = bltd::generate_blt_dv(engines, prompt, cell.flags.length,
                                      cell.flags.block_size,
                                      unmask_config(cell.flags), opts);
      std::string text;
      for (size_t i = prompt.size(); i < trace.output.size(); ++i)
        if (bltd::is_raw_byte(trace.output[i]))
          text.push_back(static_cast<char>(trace.output[i]));
      char row[256];
      std::string acc;
      if (cell.engine == "blt-s" || cell.engine == "blt-dv") {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", bltd::acceptance_rate(trace));
        acc = buf;
      }
      std::snprintf(row, sizeof(row), "%s,%s,%lld,%lld,%.6f,%s,%.6f\n",
                    cell.engine.c_str(), cell.label.c_str(),
                    static_cast<long long>(trace.decoder_nfes),
                    static_cast<long long>(trace.encoder_global_nfes),
                    bltd::memory_bandwidth_gb(trace, params), acc.c_str(),
                    bltd::type_token_ratio(text));
      (*out) << row;
    }
  }
  return 0;
}

int cmd_patch_inspect(const std::string& ckpt_path, const std::string& input_path,
                      const std::string& text) {
  bltd::Checkpoint ckpt;
  try {
    ckpt = bltd::load_checkpoint(ckpt_path);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }
  std::string raw = text;
  if (!input_path.empty()) {
    try {
      auto bytes = read_file_bytes(input_path);
      raw.assign(bytes.begin(), bytes.end());
    } catch (const std::exception& ex) {
      std::fprintf(stderr, "error: %s\n", ex.what());
      return kExitInput;
    }
  }
  bltd::ByteSeq x = bltd::to_symbols(unescape(raw), true);
  bltd::PatchSegmentation seg =
      bltd::segment(x, ckpt.entropy, ckpt.threshold, ckpt.max_patch);
  static const char* kTriggerNames[] = {"first", "bos", "entropy", "max-size"};
  for (int j = 1; j <= seg.patch_count(); ++j) {
    int start = seg.starts[j - 1];
    int len = seg.patch_end(j) - start + 1;
    std::printf("patch %d start %d len %d trigger %s\n", j, start, len,
                kTriggerNames[seg.triggers[j - 1]]);
  }
  return 0;
}

}  // namespace

#include <nlohmann/json.hpp>

namespace {

std::vector<SweepCell> parse_sweep(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read sweep spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw std::runtime_error(std::string("malformed sweep spec: ") + ex.what());
  }
  if (!j.is_array()) throw std::runtime_error("sweep spec must be a JSON array");
  std::vector<SweepCell> cells;
  for (const auto& cell : j) {
    SweepCell c;
    c.engine = cell.at("engine").get<std::string>();
    if (c.engine != "ar" && c.engine != "blt-d" && c.engine != "blt-s" &&
        c.engine != "blt-dv")
      throw std::runtime_error("sweep spec: unknown engine " + c.engine);
    if (cell.contains("length")) c.flags.length = cell["length"].get<int>();
    if (cell.contains("block_size")) c.flags.block_size = cell["block_size"].get<int>();
    if (cell.contains("window")) c.flags.window = cell["window"].get<int>();
    if (cell.contains("strategy")) c.flags.strategy = cell["strategy"].get<std::string>();
    if (cell.contains("alpha")) c.flags.alpha = cell["alpha"].get<double>();
    if (cell.contains("gamma")) c.flags.gamma = cell["gamma"].get<double>();
    if (cell.contains("top_p")) c.flags.top_p = cell["top_p"].get<double>();
    if (cell.contains("temperature"))
      c.flags.temperature = cell["temperature"].get<double>();
    c.flags.engine = c.engine;
    if (c.engine == "blt-d" || c.engine == "blt-dv") {
      if (c.flags.strategy != "confidence" && c.flags.strategy != "eb" &&
          c.flags.strategy != "one-step")
        throw std::runtime_error("sweep spec: unknown strategy " + c.flags.strategy);
    }
    std::ostringstream label;
    if (c.engine == "ar") label << "ar";
    else if (c.engine == "blt-s") label << "k=" << c.flags.window;
    else {
      label << "B=" << c.flags.block_size << " " << c.flags.strategy;
      if (c.flags.strategy == "confidence") label << " a=" << c.flags.alpha;
      if (c.flags.strategy == "eb")
        label << " g=" << c.flags.gamma << " p=" << c.flags.top_p;
    }
    c.label = label.str();
    cells.push_back(c);
  }
  return cells;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"byte-level hierarchical language model with block-diffusion "
               "and speculative inference"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model on a raw byte corpus");
  std::string config_path, corpus_path, out_path, loss_csv, resume_path, state_out;
  std::optional<uint64_t> seed_flag;
  train->add_option("--config", config_path, "config file (key = value)")->required();
  train->add_option("--corpus", corpus_path, "raw byte corpus")->required();
  train->add_option("--out", out_path, "output checkpoint")->required();
  train->add_option("--seed", seed_flag, "seed override");
  train->add_option("--loss-csv", loss_csv, "write loss curve CSV");
  train->add_option("--resume", resume_path, "resume from a training state file");
  train->add_option("--state-out", state_out, "write a training state file");

  // generate
  auto* gen = app.add_subcommand("generate", "generate bytes from a checkpoint");
  std::string ckpt_path, prompt_text, prompt_file, trace_path;
  GenerateFlags gf;
  bool hex = false;
  gen->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  gen->add_option("--prompt", prompt_text, "prompt literal (escapes allowed)");
  gen->add_option("--prompt-file", prompt_file, "prompt file (raw bytes)");
  gen->add_option("--engine", gf.engine, "ar | blt-d | blt-s | blt-dv")->required();
  auto* ob = gen->add_option("--block-size", gf.block_size, "diffusion block size");
  auto* ow = gen->add_option("--window", gf.window, "speculation window");
  auto* os = gen->add_option("--strategy", gf.strategy, "confidence | eb | one-step");
  auto* oa = gen->add_option("--alpha", gf.alpha, "confidence threshold");
  auto* og = gen->add_option("--gamma", gf.gamma, "cumulative entropy bound");
  auto* op = gen->add_option("--top-p", gf.top_p, "nucleus truncation");
  auto* ot = gen->add_option("--temperature", gf.temperature, "sampling temperature");
  gen->add_option("--length", gf.length, "bytes to generate");
  gen->add_option("--seed", seed_flag, "rng seed");
  gen->add_option("--trace", trace_path, "append a JSON trace record");
  gen->add_flag("--hex", hex, "print output as hex/escaped specials");

  // bench
  auto* bench = app.add_subcommand("bench", "sweep engines over prompts, emit CSV");
  std::string prompts_path, sweep_path, bench_out;
  bench->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  bench->add_option("--prompts", prompts_path, "prompt file, one per line")->required();
  bench->add_option("--sweep", sweep_path, "sweep spec (JSON array)")->required();
  bench->add_option("--out", bench_out, "output CSV (default stdout)");
  bench->add_option("--seed", seed_flag, "rng seed");

  // score
  auto* score = app.add_subcommand("score", "log-probabilities of candidate lines");
  std::string candidates_path;
  score->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  score->add_option("--candidates", candidates_path, "one escaped byte string per line")
      ->required();

  // patch-inspect
  auto* pinspect = app.add_subcommand("patch-inspect", "dump a segmentation");
  std::string inspect_input, inspect_text;
  pinspect->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  pinspect->add_option("--input", inspect_input, "input file (raw bytes)");
  pinspect->add_option("--text", inspect_text, "input literal (escapes allowed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train)
      return cmd_train(config_path, corpus_path, out_path, seed_flag, loss_csv,
                       resume_path, state_out);
    if (*gen) {
      gf.block_set = ob->count() > 0;
      gf.window_set = ow->count() > 0;
      gf.strategy_set = os->count() > 0;
      gf.alpha_set = oa->count() > 0;
      gf.gamma_set = og->count() > 0;
      gf.top_p_set = op->count() > 0;
      gf.temperature_set = ot->count() > 0;
      return cmd_generate(ckpt_path, prompt_text, prompt_file, gf, seed_flag,
                          trace_path, hex);
    }
    if (*bench)
      return cmd_bench(ckpt_path, prompts_path, sweep_path, bench_out, seed_flag);
    if (*score) return cmd_score(ckpt_path, candidates_path);
    if (*pinspect) return cmd_patch_inspect(ckpt_path, inspect_input, inspect_text);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitUsage;
  }
  return 0;
}
