#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "embreg/bpe.hpp"
#include "embreg/checkpoint.hpp"
#include "embreg/corpus.hpp"
#include "embreg/decoder.hpp"
#include "embreg/errors.hpp"
#include "embreg/gradcheck.hpp"
#include "embreg/hash.hpp"
#include "embreg/metrics.hpp"
#include "embreg/pipeline.hpp"
#include "embreg/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace embreg;

namespace {

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

json hashes(const std::vector<std::string>& paths) {
  json j = json::object();
  for (const auto& p : paths)
    if (!p.empty()) j[p] = file_hash(p);
  return j;
}

// No timestamps: a replayed run must reproduce its manifest byte for byte.
void write_manifest(const std::string& path, const std::string& command, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json m{{"artifact_version", kArtifactVersion},
         {"command", command},
         {"config", config},
         {"seed", seed},
         {"inputs", hashes(inputs)},
         {"outputs", hashes(outputs)}};
  write_text(path, m.dump(2) + "\n");
}

std::vector<TokenSeq> read_sentences(const std::string& path, bool tokenize_lines) {
  std::vector<TokenSeq> out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize_lines ? tokenize(line) : split_tokens(line));
  return out;
}

// ---- synth

struct SynthArgs {
  std::string task = "copy";
  std::size_t n = 1000, vocab = 20, min_len = 3, max_len = 8, dim = 32;
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.task = parse_synth_task(a.task);
  spec.n = a.n;
  spec.vocab_size = a.vocab;
  spec.min_len = a.min_len;
  spec.max_len = a.max_len;
  spec.noise_rate = a.noise;
  spec.seed = a.seed;
  const CorpusSplits s = gen_synthetic_splits(spec);
  make_dir(a.out);
  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name, const ParallelCorpus& c) {
    const std::string src = join(a.out, name + ".src"), tgt = join(a.out, name + ".tgt");
    write_parallel(src, tgt, c);
    outputs.push_back(src);
    outputs.push_back(tgt);
  };
  emit("train", s.train);
  emit("valid", s.valid);
  emit("test", s.test);
  const VecFile sv = random_vectors(synth_source_symbols(spec.task, a.vocab), a.dim, Rng::derive(a.seed, 1).next());
  const VecFile tv = random_vectors(synth_target_symbols(spec.task, a.vocab), a.dim, Rng::derive(a.seed, 2).next());
  for (const auto& [name, vf] : {std::pair{"src.vec", &sv}, std::pair{"tgt.vec", &tv}}) {
    Tensor m({vf->tokens.size(), vf->dim});
    for (std::size_t r = 0; r < vf->rows.size(); ++r)
      std::copy(vf->rows[r].begin(), vf->rows[r].end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * vf->dim));
    write_vec(join(a.out, name), vf->tokens, m);
    outputs.push_back(join(a.out, name));
  }
  json cfg{{"task", a.task},  {"n", a.n},       {"vocab", a.vocab}, {"min_len", a.min_len},
           {"max_len", a.max_len}, {"noise", a.noise}, {"dim", a.dim}};
  write_manifest(join(a.out, "manifest.json"), "synth", cfg, a.seed, {}, outputs);
  std::printf("train %zu valid %zu test %zu -> %s\n", s.train.size(), s.valid.size(), s.test.size(), a.out.c_str());
}

// ---- bpe

struct BpeLearnArgs {
  std::vector<std::string> inputs;
  std::size_t merges = kSmallCorpusMerges;
  bool tokenize = false;
  std::string out;
};

void run_bpe_learn(const BpeLearnArgs& a) {
  std::vector<TokenSeq> corpus;
  for (const auto& p : a.inputs)
    for (auto& s : read_sentences(p, a.tokenize)) corpus.push_back(std::move(s));
  if (corpus.empty()) throw DataError("no sentences in the BPE input");
  const MergeList merges = learn_bpe(word_frequencies(corpus), a.merges);
  save_merges(a.out, merges);
  write_manifest(a.out + ".manifest.json", "bpe-learn", {{"merges", a.merges}, {"tokenize", a.tokenize}}, 0, a.inputs,
                 {a.out});
  std::printf("learned %zu merges -> %s\n", merges.size(), a.out.c_str());
}

struct BpeApplyArgs {
  std::string merges, input, output;
  bool tokenize = false;
};

void run_bpe_apply(const BpeApplyArgs& a) {
  const MergeList merges = load_merges(a.merges);
  std::vector<TokenSeq> out;
  for (const auto& s : read_sentences(a.input, a.tokenize)) out.push_back(apply_bpe(s, merges));
  write_lines(a.output, out);
  write_manifest(a.output + ".manifest.json", "bpe-apply", {{"tokenize", a.tokenize}}, 0, {a.merges, a.input},
                 {a.output});
}

// ---- preprocess

struct PreprocessArgs {
  std::string src, tgt, merges, out, name = "train";
  std::size_t max_size = 50000, min_freq = 1;
  bool tokenize = false;
};

void run_preprocess(const PreprocessArgs& a) {
  std::size_t dropped = 0;
  ParallelCorpus c = read_parallel(a.src, a.tgt, a.tokenize, &dropped);
  if (!a.merges.empty()) {
    const MergeList merges = load_merges(a.merges);
    for (auto& p : c.pairs) {
      p.src = apply_bpe(p.src, merges);
      p.tgt = apply_bpe(p.tgt, merges);
    }
  }
  make_dir(a.out);
  const std::string src = join(a.out, a.name + ".src"), tgt = join(a.out, a.name + ".tgt");
  write_parallel(src, tgt, c);
  const Vocab sv = Vocab::build(c.sources(), a.max_size, a.min_freq);
  const Vocab tv = Vocab::build(c.targets(), a.max_size, a.min_freq);
  sv.save(join(a.out, "src.vocab"));
  tv.save(join(a.out, "tgt.vocab"));
  json cfg{{"tokenize", a.tokenize}, {"max_size", a.max_size}, {"min_freq", a.min_freq}, {"merges", a.merges}};
  write_manifest(join(a.out, a.name + ".manifest.json"), "preprocess", cfg, 0, {a.src, a.tgt, a.merges},
                 {src, tgt, join(a.out, "src.vocab"), join(a.out, "tgt.vocab")});
  std::printf("%zu pairs (%zu dropped), vocab %zu / %zu\n", c.size(), dropped, sv.size(), tv.size());
}

// ---- train

struct TrainArgs {
  std::string config, out;
  double lambda = 0, beta = 0, lr = 0;
  std::string rewe_target, sent_embedder;
  std::uint64_t seed = 0;
  int precision = 64;
  std::size_t epochs = 0, batch_size = 0, eval_every = 0;
};

void run_train(const TrainArgs& a, const CLI::App& cmd) {
  RunConfig cfg;
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.config));
    } catch (const json::parse_error& e) {
      throw DataError(a.config + ": " + e.what());
    }
    cfg = j.get<RunConfig>();
  }
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (given("--lambda")) cfg.train.lambda = a.lambda;
  if (given("--beta")) cfg.train.beta = a.beta;
  if (given("--lr")) cfg.train.lr = a.lr;
  if (given("--rewe-target")) cfg.rewe_target = parse_rewe_target(a.rewe_target);
  if (given("--sent-embedder")) cfg.sent_embedder = parse_sent_embedder(a.sent_embedder);
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--precision")) cfg.train.precision = a.precision;
  if (given("--epochs")) cfg.train.max_epochs = a.epochs;
  if (given("--batch-size")) cfg.train.batch_size = a.batch_size;
  if (given("--eval-every")) cfg.train.eval_every = a.eval_every;
  cfg.train.seed = cfg.seed;
  cfg.model.seed = cfg.seed;
  cfg.validate();

  Experiment exp = prepare_experiment(cfg);
  if (!cfg.data.src_vec.empty())
    std::fprintf(stderr, "source embedding coverage %.4f\n", exp.src_coverage.fraction);
  if (!cfg.data.tgt_vec.empty())
    std::fprintf(stderr, "target embedding coverage %.4f\n", exp.tgt_coverage.fraction);
  if (exp.degenerate_sentences)
    std::fprintf(stderr, "%zu training sentences have no sentence vector (left out of ReSE)\n",
                 exp.degenerate_sentences);

  TrainHooks hooks;
  hooks.on_eval = [](const EvalRecord& r) {
    std::fprintf(stderr, "eval %zu epoch %zu step %zu  nll %.4f rewe %.4f rese %.4f  valid ppl %.4f  lr %g%s\n",
                 r.eval, r.epoch, r.step, r.train.nll, r.train.rewe, r.train.rese, r.valid_ppl, r.lr,
                 r.improved ? " *" : "");
  };
  RunResult res = run_training(cfg, exp, hooks);

  make_dir(a.out);
  const std::string cfg_path = join(a.out, "config.json"), log_path = join(a.out, "train_log.jsonl"),
                    ckpt_path = join(a.out, "model.ckpt"), sv_path = join(a.out, "src.vocab"),
                    tv_path = join(a.out, "tgt.vocab");
  json resolved = cfg;
  resolved["model"] = resolve_model_config(cfg, exp);
  write_text(cfg_path, resolved.dump(2) + "\n");
  write_text(log_path, res.train.log.to_jsonl());
  write_text(ckpt_path, res.train.best_checkpoint);
  exp.src_vocab.save(sv_path);
  exp.tgt_vocab.save(tv_path);
  const DataPaths& d = cfg.data;
  write_manifest(join(a.out, "manifest.json"), "train", resolved, cfg.seed,
                 {d.train_src, d.train_tgt, d.valid_src, d.valid_tgt, d.src_vec, d.tgt_vec},
                 {cfg_path, log_path, ckpt_path, sv_path, tv_path});
  std::printf("best valid ppl %.6f at eval %zu, %zu evaluations, stop: %s\n", res.train.log.best_ppl,
              res.train.log.best_eval, res.train.log.records.size(), res.train.log.stop_reason.c_str());
}

// ---- loading a trained run

struct RunFiles {
  std::string run, checkpoint, src_vocab, tgt_vocab;

  void resolve() {
    if (!run.empty()) {
      if (checkpoint.empty()) checkpoint = join(run, "model.ckpt");
      if (src_vocab.empty()) src_vocab = join(run, "src.vocab");
      if (tgt_vocab.empty()) tgt_vocab = join(run, "tgt.vocab");
    }
    if (checkpoint.empty() || src_vocab.empty() || tgt_vocab.empty())
      throw UsageError("give --run DIR or all of --checkpoint, --src-vocab and --tgt-vocab");
  }
};

void add_run_options(CLI::App* cmd, RunFiles& f) {
  cmd->add_option("--run", f.run, "Training output directory");
  cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  cmd->add_option("--src-vocab", f.src_vocab, "Source vocabulary file");
  cmd->add_option("--tgt-vocab", f.tgt_vocab, "Target vocabulary file");
}

struct Loaded {
  std::unique_ptr<Seq2SeqModel> model;
  Vocab src, tgt;
};

Loaded load_run(RunFiles f) {
  f.resolve();
  Loaded l;
  CheckpointMeta meta;
  l.model = load_checkpoint(f.checkpoint, &meta);
  l.src = Vocab::load(f.src_vocab);
  l.tgt = Vocab::load(f.tgt_vocab);
  check_vocab_hashes(meta, l.src, l.tgt);
  return l;
}

// ---- translate

struct TranslateArgs {
  RunFiles files;
  std::string input, output, merges;
  std::size_t beam = 5, max_len = 0;
  bool len_norm = false, tokenize = false;
};

void run_translate(const TranslateArgs& a) {
  Loaded l = load_run(a.files);
  MergeList merges;
  if (!a.merges.empty()) merges = load_merges(a.merges);
  BeamOptions opts;
  opts.beam = a.beam;
  opts.max_len = a.max_len;
  opts.len_norm = a.len_norm;
  std::vector<TokenSeq> out;
  for (const auto& s : read_sentences(a.input, a.tokenize)) {
    if (s.empty()) {
      out.emplace_back();
      continue;
    }
    out.push_back(translate_sentence(*l.model, l.src, l.tgt, s, opts, a.merges.empty() ? nullptr : &merges));
  }
  write_lines(a.output, out);
  json cfg{{"beam", a.beam}, {"max_len", a.max_len}, {"len_norm", a.len_norm}, {"tokenize", a.tokenize}};
  RunFiles f = a.files;
  f.resolve();
  write_manifest(a.output + ".manifest.json", "translate", cfg, 0,
                 {f.checkpoint, f.src_vocab, f.tgt_vocab, a.input, a.merges}, {a.output});
}

// ---- evaluate

struct EvaluateArgs {
  std::string hyp, ref;
  bool smooth = false, tokenize = false;
  RunFiles files;
  std::string src, tgt;
};

void run_evaluate(const EvaluateArgs& a) {
  if (!a.hyp.empty() || !a.ref.empty()) {
    if (a.hyp.empty() || a.ref.empty()) throw UsageError("--hyp and --ref go together");
    const auto h = read_sentences(a.hyp, a.tokenize), r = read_sentences(a.ref, a.tokenize);
    std::printf("BLEU %.2f\n", bleu(h, r, a.smooth));
  }
  if (!a.src.empty() || !a.tgt.empty()) {
    if (a.src.empty() || a.tgt.empty()) throw UsageError("--src and --tgt go together");
    Loaded l = load_run(a.files);
    const ParallelCorpus c = read_parallel(a.src, a.tgt, a.tokenize);
    const Batches b = make_batches(c, l.src, l.tgt, 64, 0, std::numeric_limits<std::size_t>::max());
    std::printf("PPL %.6f\n", evaluate_validation(*l.model, b.batches));
  }
  if (a.hyp.empty() && a.src.empty()) throw UsageError("nothing to evaluate: give --hyp/--ref or --src/--tgt");
}

// ---- analyze

struct AnalyzeArgs {
  RunFiles files;
  std::string src, tgt, mode = "forced", csv, perturb_csv, out;
  std::size_t min_cluster = 2, perturb_k = 0, max_len = 0;
  double perturb_radius = 0.1;
  std::uint64_t seed = 1;
  bool tokenize = false;
};

void run_analyze(const AnalyzeArgs& a) {
  Loaded l = load_run(a.files);
  const ParallelCorpus c = read_parallel(a.src, a.tgt, a.tokenize);
  const StateDump dump = dump_states(*l.model, c, l.src, l.tgt, parse_dump_mode(a.mode), a.max_len);
  std::vector<std::string> outputs;
  if (!a.csv.empty()) {
    write_state_csv(a.csv, dump, l.tgt);
    outputs.push_back(a.csv);
  }
  if (a.perturb_k > 0) {
    if (a.perturb_csv.empty()) throw UsageError("--perturb-k needs --perturb-csv");
    write_perturbation_csv(a.perturb_csv, *l.model, dump, l.tgt, a.perturb_k, a.perturb_radius, a.seed);
    outputs.push_back(a.perturb_csv);
  }
  const ClusterReport rep = analyze_clusters(dump, a.min_cluster);
  const std::string text = rep.to_json().dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!a.out.empty()) {
    write_text(a.out, text);
    outputs.push_back(a.out);
    RunFiles f = a.files;
    f.resolve();
    json cfg{{"mode", a.mode},        {"min_cluster", a.min_cluster},     {"perturb_k", a.perturb_k},
             {"perturb_radius", a.perturb_radius}, {"max_len", a.max_len}, {"tokenize", a.tokenize}};
    write_manifest(a.out + ".manifest.json", "analyze", cfg, a.seed,
                   {f.checkpoint, f.src_vocab, f.tgt_vocab, a.src, a.tgt}, outputs);
  }
}

// ---- gradcheck

struct GradcheckArgs {
  std::string dims = "micro";
  std::uint64_t seed = 1;
  double lambda = 1.0, beta = 1.0;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.dims != "micro") throw UsageError("--dims: only 'micro' is available");
  const GradCheckResult r = check_objective_gradients(a.seed, a.lambda, a.beta);
  std::printf("max rel error %.3e over %zu coordinates (%zu excluded at ReLU kinks)\n", r.max_rel_error, r.checked,
              r.excluded.size());
  return r.max_rel_error < 1e-4 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seq2seq NMT with word- and sentence-embedding regression"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic parallel corpus and random word vectors");
  c_synth->add_option("--task", synth.task, "copy | reverse | numword")->check(CLI::IsMember({"copy", "reverse", "numword"}));
  c_synth->add_option("--n", synth.n, "Distinct sentence pairs");
  c_synth->add_option("--vocab", synth.vocab, "Symbol inventory size");
  c_synth->add_option("--min-len", synth.min_len);
  c_synth->add_option("--max-len", synth.max_len);
  c_synth->add_option("--noise", synth.noise, "Fraction of training target tokens replaced");
  c_synth->add_option("--dim", synth.dim, "Width of the generated .vec files");
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--out", synth.out)->required();

  BpeLearnArgs bl;
  auto* c_bl = app.add_subcommand("bpe-learn", "Learn BPE merges");
  c_bl->add_option("--input", bl.inputs, "Tokenized text files")->required();
  c_bl->add_option("--merges", bl.merges, "Number of merges");
  c_bl->add_flag("--tokenize", bl.tokenize, "Lowercase and split punctuation first");
  c_bl->add_option("--out", bl.out)->required();

  BpeApplyArgs ba;
  auto* c_ba = app.add_subcommand("bpe-apply", "Split words with learned merges");
  c_ba->add_option("--merges", ba.merges)->required();
  c_ba->add_option("--input", ba.input)->required();
  c_ba->add_option("--output", ba.output)->required();
  c_ba->add_flag("--tokenize", ba.tokenize);

  PreprocessArgs pp;
  auto* c_pp = app.add_subcommand("preprocess", "Tokenize / segment a parallel corpus and build vocabularies");
  c_pp->add_option("--src", pp.src)->required();
  c_pp->add_option("--tgt", pp.tgt)->required();
  c_pp->add_option("--merges", pp.merges, "Apply these BPE merges to both sides");
  c_pp->add_option("--name", pp.name, "Output file stem");
  c_pp->add_option("--max-size", pp.max_size);
  c_pp->add_option("--min-freq", pp.min_freq);
  c_pp->add_flag("--tokenize", pp.tokenize);
  c_pp->add_option("--out", pp.out)->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model");
  c_tr->add_option("--config", tr.config, "JSON run config");
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->add_option("--lambda", tr.lambda, "ReWE weight");
  c_tr->add_option("--beta", tr.beta, "ReSE weight");
  c_tr->add_option("--lr", tr.lr);
  c_tr->add_option("--rewe-target", tr.rewe_target)->check(CLI::IsMember({"frozen", "live"}));
  c_tr->add_option("--sent-embedder", tr.sent_embedder)->check(CLI::IsMember({"mean", "hash"}));
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_option("--precision", tr.precision)->check(CLI::IsMember({32, 64}));
  c_tr->add_option("--epochs", tr.epochs);
  c_tr->add_option("--batch-size", tr.batch_size);
  c_tr->add_option("--eval-every", tr.eval_every, "Training sentences between validations");

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "Translate a file");
  add_run_options(c_tl, tl.files);
  c_tl->add_option("--input", tl.input)->required();
  c_tl->add_option("--output", tl.output)->required();
  c_tl->add_option("--merges", tl.merges, "Segment the input with these merges");
  c_tl->add_option("--beam", tl.beam);
  c_tl->add_option("--max-len", tl.max_len, "0: 2 * source length + 10, at most 200");
  c_tl->add_flag("--len-norm", tl.len_norm, "Rank hypotheses by log-probability per token");
  c_tl->add_flag("--tokenize", tl.tokenize);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "BLEU of a hypothesis file, perplexity of a model");
  c_ev->add_option("--hyp", ev.hyp);
  c_ev->add_option("--ref", ev.ref);
  c_ev->add_flag("--smooth", ev.smooth, "Add-one smoothing for 2- to 4-grams");
  c_ev->add_flag("--tokenize", ev.tokenize);
  add_run_options(c_ev, ev.files);
  c_ev->add_option("--src", ev.src, "Source side for perplexity");
  c_ev->add_option("--tgt", ev.tgt, "Target side for perplexity");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Cluster decoder states by predicted word");
  add_run_options(c_an, an.files);
  c_an->add_option("--src", an.src)->required();
  c_an->add_option("--tgt", an.tgt)->required();
  c_an->add_option("--mode", an.mode)->check(CLI::IsMember({"forced", "free"}));
  c_an->add_option("--min-cluster", an.min_cluster);
  c_an->add_option("--max-len", an.max_len, "Free-mode length limit");
  c_an->add_option("--csv", an.csv, "Write the states here");
  c_an->add_option("--perturb-k", an.perturb_k, "Samples per state for the perturbation export");
  c_an->add_option("--perturb-radius", an.perturb_radius);
  c_an->add_option("--perturb-csv", an.perturb_csv);
  c_an->add_option("--seed", an.seed);
  c_an->add_option("--out", an.out, "Write the JSON report here");
  c_an->add_flag("--tokenize", an.tokenize);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the training objective");
  c_gc->add_option("--dims", gc.dims)->check(CLI::IsMember({"micro"}));
  c_gc->add_option("--seed", gc.seed);
  c_gc->add_option("--lambda", gc.lambda);
  c_gc->add_option("--beta", gc.beta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_synth) run_synth(synth);
    if (*c_bl) run_bpe_learn(bl);
    if (*c_ba) run_bpe_apply(ba);
    if (*c_pp) run_preprocess(pp);
    if (*c_tr) run_train(tr, *c_tr);
    if (*c_tl) run_translate(tl);
    if (*c_ev) run_evaluate(ev);
    if (*c_an) run_analyze(an);
    if (*c_gc) return run_gradcheck(gc);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }
  return 0;
}
