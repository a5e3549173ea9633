#include "csd/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "csd/bundle.hpp"
#include "csd/config.hpp"
#include "csd/corpus.hpp"
#include "csd/metrics.hpp"
#include "csd/pipeline.hpp"
#include "csd/service.hpp"
#include "csd/synth.hpp"

namespace csd {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ablation;
  int port = 8080;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.ablation.empty()) cfg.ablation = AblationConfig::from_name(c.ablation);
  return cfg;
}

std::string require_path(const std::string& given, const std::string& fallback, const char* what) {
  const std::string p = given.empty() ? fallback : given;
  if (p.empty()) throw UsageError(std::string("no ") + what + " given (pass it or set it in --config)");
  return p;
}

Corpus load_optional(const std::string& path) { return path.empty() ? Corpus{} : load_corpus(path); }

ModelConfig model_config_for(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  ModelConfig m = cfg.model;
  m.vocab_size = vocab.size();
  m.validate();
  return m;
}

Vocabulary vocab_for_stage(const ExperimentConfig& cfg, const Corpus& train) {
  const fs::path vp = fs::path(cfg.paths.model_dir) / "vocab.txt";
  if (fs::exists(vp)) return Vocabulary::load(vp.string());
  fs::create_directories(cfg.paths.model_dir);
  Vocabulary v = Vocabulary::build(train);
  v.save(vp.string());
  return v;
}

// Output files may name directories that do not exist yet.
const std::string& with_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  return path;
}

void write_json(const nlohmann::json& j, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Cognitive-stimulation dialogue toolkit", "csd"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "Experiment config (TOML or JSON)");
  app.add_option("--seed", common.seed, "Overrides the config seed");
  app.add_option("--ablation", common.ablation, "Ablation preset")
      ->check(CLI::IsMember({"full", "nm", "il", "ca", "al"}));
  app.add_option("--port", common.port, "HTTP port for serve")->check(CLI::Range(0, 65535));

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics table");
  std::string stats_path;
  bool stats_json = false;
  stats->add_option("corpus", stats_path, "CSConv file");
  stats->add_flag("--json", stats_json, "Emit JSON instead of a table");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic labelled corpus");
  std::string synth_out, synth_lexicon, synth_words;
  int synth_n = 100, synth_min = 2, synth_max = 10;
  synth->add_option("--out", synth_out, "Output CSConv file")->required();
  synth->add_option("--conversations,-n", synth_n, "Number of conversations")->check(CLI::PositiveNumber);
  synth->add_option("--min-utterances", synth_min)->check(CLI::Range(2, 1000));
  synth->add_option("--max-utterances", synth_max)->check(CLI::Range(2, 1000));
  synth->add_option("--lexicon-out", synth_lexicon, "Also write the matching VA lexicon");
  synth->add_option("--words-out", synth_words, "Also write the segmentation word list");

  // split
  auto* split = app.add_subcommand("split", "Split a corpus by conversation");
  std::string split_path, split_dir;
  SplitRatios ratios;
  split->add_option("corpus", split_path, "CSConv file");
  split->add_option("--out-dir", split_dir, "Directory for train/dev/test.csconv")->required();
  split->add_option("--train", ratios.train);
  split->add_option("--dev", ratios.dev);
  split->add_option("--test", ratios.test);

  // build-dicts
  auto* dicts = app.add_subcommand("build-dicts", "Build emotion and keyword dictionaries");
  std::string dicts_corpus, dicts_out;
  dicts->add_option("corpus", dicts_corpus, "CSConv file");
  dicts->add_option("--out", dicts_out, "Dictionary file");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Knowledge-masked encoder pretraining");
  std::string pretrain_dict = "keyword";
  pretrain->add_option("--dict", pretrain_dict, "Dictionary driving the masks")
      ->check(CLI::IsMember({"keyword", "emotion"}));

  auto* train_cls = app.add_subcommand("train-cls", "Train the CS, emotion and strategy classifiers");
  auto* train_dec = app.add_subcommand("train-dec", "Train the decoder and write the model bundle");

  // generate
  auto* generate = app.add_subcommand("generate", "Generate one reply");
  std::vector<std::string> gen_turns;
  std::string gen_context;
  bool gen_greedy = false;
  generate->add_option("--message,-m", gen_turns, "Context turns, oldest first, starting with SPEAKER");
  generate->add_option("--context", gen_context, "CSConv file; its first conversation is the context");
  generate->add_flag("--greedy", gen_greedy);

  // eval
  auto* eval = app.add_subcommand("eval", "BLEU, distinct-n and label accuracy on a test corpus");
  std::string eval_test, eval_out, eval_transcript;
  eval->add_option("--test", eval_test, "Test corpus (defaults to paths.test_corpus)");
  eval->add_option("--out", eval_out, "Report JSON path");
  eval->add_option("--transcript", eval_transcript, "JSONL transcript path");

  auto* chat = app.add_subcommand("chat", "Terminal chat over the service respond path");
  std::string chat_session = "terminal";
  chat->add_option("--session", chat_session);

  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string serve_host = "127.0.0.1";
  serve->add_option("--host", serve_host);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "csd: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    const ExperimentConfig cfg = resolve_config(common);

    if (stats->parsed()) {
      const Corpus c = load_corpus(require_path(stats_path, cfg.paths.corpus, "corpus"));
      const StatsReport r = corpus_stats(c);
      if (stats_json) {
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [t, counts] : r.label_histograms) {
          nlohmann::json h = nlohmann::json::object();
          for (std::size_t i = 0; i < counts.size(); ++i) {
            h[std::string(label_name(t, static_cast<int>(i)))] = {{"count", counts[i].count},
                                                                   {"percent", counts[i].proportion}};
          }
          hist[std::string(taxonomy_name(t))] = h;
        }
        out << nlohmann::json{{"conversations", r.conversation_count},
                              {"utterances", r.utterance_count},
                              {"speaker_utterances", r.speaker_utterances},
                              {"listener_utterances", r.listener_utterances},
                              {"tokens", r.token_count},
                              {"avg_tokens_per_conversation", r.avg_tokens_per_conversation},
                              {"avg_utterances_per_conversation", r.avg_utterances_per_conversation},
                              {"avg_tokens_per_utterance", r.avg_tokens_per_utterance},
                              {"labels", hist}}
                   .dump(2)
            << '\n';
      } else {
        out << format_stats(r);
      }
      return 0;
    }

    if (synth->parsed()) {
      if (synth_min > synth_max) throw UsageError("--min-utterances exceeds --max-utterances");
      const TemplateBank bank = TemplateBank::standard();
      const Corpus c = synthesize_corpus(cfg.seed, synth_n, bank, {synth_min, synth_max});
      save_corpus(c, with_parent(synth_out));
      if (!synth_lexicon.empty()) std::ofstream(with_parent(synth_lexicon)) << bank.lexicon_tsv();
      if (!synth_words.empty()) {
        std::ofstream w(with_parent(synth_words));
        for (const auto& word : bank.word_list()) w << word << '\n';
      }
      out << "wrote " << c.conversations.size() << " conversations to " << synth_out << '\n';
      return 0;
    }

    if (split->parsed()) {
      const Corpus c = load_corpus(require_path(split_path, cfg.paths.corpus, "corpus"));
      const CorpusSplit s = split_corpus(c, ratios, cfg.seed);
      fs::create_directories(split_dir);
      save_corpus(s.train, (fs::path(split_dir) / "train.csconv").string());
      save_corpus(s.dev, (fs::path(split_dir) / "dev.csconv").string());
      save_corpus(s.test, (fs::path(split_dir) / "test.csconv").string());
      out << "train " << s.train.conversations.size() << ", dev " << s.dev.conversations.size() << ", test "
          << s.test.conversations.size() << '\n';
      return 0;
    }

    if (dicts->parsed()) {
      const Corpus c = load_corpus(require_path(dicts_corpus, cfg.paths.corpus, "corpus"));
      const std::string dest = require_path(dicts_out, cfg.paths.dicts, "output path");
      const KnowledgeResources res = KnowledgeResources::from_paths(cfg.paths);
      const auto ex = res.extractor(c);
      const knowledge::Dictionaries d = knowledge::build_dictionaries(c, cfg.knowledge, *ex);
      knowledge::save_dictionaries(d, with_parent(dest));
      out << "emotion: " << d.emotion.entity_count() << " entities, " << d.emotion.sentence_count()
          << " sentences; keyword: " << d.keyword.entity_count() << " entities, " << d.keyword.sentence_count()
          << " sentences\n";
      return 0;
    }

    if (pretrain->parsed()) {
      const Corpus train = load_corpus(require_path("", cfg.paths.corpus, "paths.corpus"));
      const Vocabulary vocab = vocab_for_stage(cfg, train);
      knowledge::Dictionaries d;
      if (!cfg.paths.dicts.empty() && fs::exists(cfg.paths.dicts)) {
        d = knowledge::load_dictionaries(cfg.paths.dicts);
      } else {
        const KnowledgeResources res = KnowledgeResources::from_paths(cfg.paths);
        d = knowledge::build_dictionaries(train, cfg.knowledge, *res.extractor(train));
      }
      const bool kw = pretrain_dict == "keyword";
      const masking::MaskSchedule sched = effective_schedule(kw ? cfg.keyword_mask : cfg.emotion_mask, cfg.ablation);
      PretrainReport report;
      const PretrainModel m = pretrain_encoder(train, vocab, kw ? d.keyword : d.emotion, sched,
                                               model_config_for(cfg, vocab), cfg.pretrain,
                                               cfg.seed + (kw ? 0 : 100), &report);
      const fs::path ckpt = fs::path(cfg.paths.model_dir) / ("encoder_" + pretrain_dict + ".ckpt");
      save_pretrained(ckpt.string(), m, pretrain_dict);
      write_json({{"mlm_loss", report.mlm_loss}, {"nsp_loss", report.nsp_loss}, {"seconds", report.seconds},
                  {"seed", report.seed}},
                 fs::path(cfg.paths.model_dir) / ("pretrain_" + pretrain_dict + ".json"));
      out << "wrote " << ckpt.string() << '\n';
      return 0;
    }

    if (train_cls->parsed()) {
      const Corpus train = load_corpus(require_path("", cfg.paths.corpus, "paths.corpus"));
      const Corpus dev = load_optional(cfg.paths.dev_corpus);
      const Vocabulary vocab = vocab_for_stage(cfg, train);
      const fs::path dir(cfg.paths.model_dir);
      const PretrainModel emo = load_pretrained((dir / "encoder_emotion.ckpt").string());
      const PretrainModel kw = load_pretrained((dir / "encoder_keyword.ckpt").string());
      ClassifierReport report;
      const ClassifierSet cls = train_classifiers(train, dev.conversations.empty() ? nullptr : &dev, vocab, emo, kw,
                                                  cfg.classifier, cfg.seed + 200, &report);
      save_classifiers(dir.string(), cls);
      nlohmann::json acc = nlohmann::json::object();
      for (const auto& [t, v] : report.dev_accuracy) acc[std::string(taxonomy_name(t))] = v;
      nlohmann::json tr = nlohmann::json::object();
      for (const auto& [t, v] : report.train_accuracy) tr[std::string(taxonomy_name(t))] = v;
      const nlohmann::json summary{{"train_accuracy", tr}, {"dev_accuracy", acc}, {"seconds", report.seconds}};
      write_json(summary, dir / "classifiers.json");
      out << summary.dump(2) << '\n';
      return 0;
    }

    if (train_dec->parsed()) {
      const Corpus train = load_corpus(require_path("", cfg.paths.corpus, "paths.corpus"));
      const Vocabulary vocab = vocab_for_stage(cfg, train);
      const ModelConfig mcfg = model_config_for(cfg, vocab);
      ClassifierSet cls = load_classifiers(cfg.paths.model_dir, mcfg);
      const KnowledgeResources res = KnowledgeResources::from_paths(cfg.paths);
      const auto ex = res.extractor(train);
      const auto examples =
          make_decoder_examples(train, vocab, mcfg, cfg.decoder, cfg.ablation, &cls, {&res.lexicon, ex.get()});
      TrainReport report;
      GeneratorModel gen = train_decoder(examples, mcfg, cfg.decoder, cfg.ablation, cfg.seed + 300, &report);
      const ModelBundle b = make_bundle(vocab, mcfg, cfg, std::move(cls), std::move(gen));
      b.save(cfg.paths.model_dir);
      std::ofstream log(fs::path(cfg.paths.model_dir) / "train_decoder.jsonl");
      report.write_jsonl(log);
      out << "wrote bundle " << b.version() << " to " << cfg.paths.model_dir << " (" << examples.size()
          << " examples, " << report.steps.size() << " steps)\n";
      return 0;
    }

    if (generate->parsed()) {
      ModelBundle b = ModelBundle::load(cfg.paths.model_dir);
      Conversation ctx;
      if (!gen_context.empty()) {
        const Corpus c = load_corpus(gen_context);
        if (c.conversations.empty()) throw UsageError("context file holds no conversation");
        ctx = c.conversations.front();
      } else {
        if (gen_turns.empty()) throw UsageError("pass --message or --context");
        for (std::size_t i = 0; i < gen_turns.size(); ++i) {
          Utterance u;
          u.role = i % 2 == 0 ? Role::Speaker : Role::Listener;
          u.text = gen_turns[i];
          validate_utterance(u);
          ctx.utterances.push_back(u);
        }
      }
      GenerationParams p = cfg.generation;
      p.seed = common.seed ? *common.seed : p.seed;
      p.greedy = p.greedy || gen_greedy;
      const GeneratedResponse g = sample_response(ctx, b, p);
      out << "[" << to_string(g.labels.cs) << " | " << to_string(g.labels.emo) << " | "
          << to_string(g.labels.strategy) << "] " << g.text << '\n';
      return 0;
    }

    if (eval->parsed()) {
      ModelBundle b = ModelBundle::load(cfg.paths.model_dir);
      const Corpus test = load_corpus(require_path(eval_test, cfg.paths.test_corpus, "test corpus"));
      std::vector<TranscriptEntry> transcript;
      const EvalReport r = run_eval(test, b, cfg.generation, eval_transcript.empty() ? nullptr : &transcript);
      if (!eval_out.empty()) write_eval_report(r, with_parent(eval_out));
      if (!eval_transcript.empty()) write_transcript(transcript, with_parent(eval_transcript));
      out << r.to_json().dump(2) << '\n';
      return 0;
    }

    if (chat->parsed() || serve->parsed()) {
      auto bundle = std::make_shared<ModelBundle>(ModelBundle::load(cfg.paths.model_dir));
      ServiceOptions so;
      so.defaults = cfg.generation;
      so.transcript_path = cfg.paths.transcripts;
      so.seed_base = cfg.seed;
      ChatService service(bundle, so);
      if (chat->parsed()) {
        out << "model " << service.model_version() << ". Type a message, or /quit to leave.\n";
        std::string line;
        while (out << "> " << std::flush, std::getline(in, line)) {
          if (line == "/quit" || line == "/exit") break;
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          try {
            const ChatTurnResult r = service.respond(chat_session, line);
            out << "[" << to_string(r.labels.cs) << " | " << to_string(r.labels.emo) << " | "
                << to_string(r.labels.strategy) << "] " << r.response_text << '\n';
          } catch (const ServiceError& e) {
            err << "error: " << e.what() << '\n';
          }
        }
        service.flush();
        return 0;
      }
      HttpServer server(service);
      const int port = server.start(serve_host, common.port);
      out << "serving model " << service.model_version() << " on http://" << serve_host << ":" << port << '\n'
          << std::flush;
      g_stop.store(false);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      service.flush();
      out << "stopped\n";
      return 0;
    }
    err << app.help();
    return 2;
  } catch (const UsageError& e) {
    err << "csd: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "csd: " << e.what() << '\n';
    return 1;
  }
}

int cli_dispatch(int argc, const char* const* argv) { return cli_dispatch(argc, argv, std::cout, std::cerr, std::cin); }

}  // namespace csd
