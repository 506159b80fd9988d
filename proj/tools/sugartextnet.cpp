// sugartextnet: gen-corpus | tokenize | train | eval | predict | ablate

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "stn/checkpoint.hpp"
#include "stn/config.hpp"
#include "stn/errors.hpp"

namespace fs = std::filesystem;
using namespace stn;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Options {
    std::string config_file;
    std::string out_dir;
    std::map<std::string, std::string> overrides;  // dotted key -> text
};

void add_common(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_file, "JSON configuration file");
    cmd->add_option("--out-dir", opt.out_dir, "directory for every output")->required();
    for (const auto& key : config_keys()) {
        auto* o = cmd->add_option_function<std::string>(
            "--" + key.name, [&opt, name = key.name](const std::string& v) { opt.overrides[name] = v; }, key.help);
        o->group("Configuration");
    }
    // Short spellings for the file inputs.
    for (const char* p : {"corpus", "vocab", "checkpoint", "input"}) {
        cmd->add_option_function<std::string>(
            std::string("--") + p, [&opt, p](const std::string& v) { opt.overrides[std::string("paths.") + p] = v; },
            std::string("same as --paths.") + p);
    }
}

RunConfig resolve(const Options& opt, const std::optional<nlohmann::ordered_json>& base = std::nullopt) {
    RunConfig cfg = !opt.config_file.empty() ? RunConfig::from_file(opt.config_file)
                    : base                   ? RunConfig::from_json(*base)
                                             : RunConfig();
    for (const auto& [key, value] : opt.overrides) cfg.set(key, value);
    // Surface bad values as usage errors before any file is touched.
    cfg.encode_options();
    cfg.model_config(cfg.vocab_size());
    cfg.loss_config();
    cfg.train_config();
    cfg.synthetic_spec();
    cfg.split_ratios();
    cfg.ablation_seeds();
    return cfg;
}

fs::path prepare_out(const Options& opt, const RunConfig& cfg) {
    const fs::path dir(opt.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::ofstream(dir / "config.json") << cfg.dump();
    return dir;
}

std::string require_path(const RunConfig& cfg, const char* name) {
    auto p = cfg.path(name);
    if (p.empty()) throw ConfigError(std::string("--") + name + " (paths." + name + ") is required");
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

struct PreparedData {
    Vocabulary vocab;
    std::string vocab_path;
    Splits splits;
};

// Loads the corpus, obtains a vocabulary (given or trained on the training
// split and written to the output directory), filters and splits.
PreparedData prepare_data(const RunConfig& cfg, const fs::path& out) {
    auto records = load_jsonl_strict(require_path(cfg, "corpus"));
    if (records.empty()) throw DataError("corpus is empty");
    PreparedData d;
    auto split = stratified_split(records, cfg.split_seed(), cfg.split_ratios());
    if (!cfg.path("vocab").empty()) {
        d.vocab_path = fs::absolute(cfg.path("vocab")).string();
        d.vocab = Vocabulary::load(d.vocab_path);
    } else {
        d.vocab = train_bpe(texts_of(split.train), cfg.vocab_size());
        d.vocab_path = fs::absolute(out / "vocab.txt").string();
        d.vocab.save(d.vocab_path);
        std::cerr << "trained vocabulary (" << d.vocab.size() << " tokens) -> " << d.vocab_path << "\n";
    }
    auto keep = [&](std::vector<PostRecord>& part, const char* name) {
        auto f = filter_short(part, d.vocab, cfg.min_tokens());
        if (f.dropped) std::cerr << name << ": dropped " << f.dropped << " post(s) under " << cfg.min_tokens() << " tokens\n";
        part = std::move(f.records);
    };
    keep(split.train, "train");
    keep(split.val, "val");
    keep(split.test, "test");
    d.splits = std::move(split);
    return d;
}

int cmd_gen_corpus(const Options& opt) {
    const auto cfg = resolve(opt);
    const auto out = prepare_out(opt, cfg);
    const auto records = gen_synthetic(cfg.synthetic_spec());
    write_jsonl(out / "corpus.jsonl", records);
    const auto c = class_counts(records);
    std::cerr << "wrote " << records.size() << " posts (" << c[0] << " / " << c[1] << " / " << c[2] << ") to "
              << (out / "corpus.jsonl").string() << "\n";
    return kOk;
}

int cmd_tokenize(const Options& opt) {
    const auto cfg = resolve(opt);
    const auto out = prepare_out(opt, cfg);
    const auto records = load_jsonl_strict(require_path(cfg, "corpus"));
    if (records.empty()) throw DataError("corpus is empty");
    const auto vocab = train_bpe(texts_of(records), cfg.vocab_size());
    vocab.save(out / "vocab.txt");
    const auto f = filter_short(records, vocab, cfg.min_tokens());
    std::cerr << "vocabulary of " << vocab.size() << " tokens, " << vocab.merges().size() << " merges -> "
              << (out / "vocab.txt").string() << "; " << f.dropped << " post(s) under " << cfg.min_tokens()
              << " tokens\n";
    return kOk;
}

int cmd_train(const Options& opt) {
    auto cfg = resolve(opt);
    const auto out = prepare_out(opt, cfg);
    auto data = prepare_data(cfg, out);
    const auto enc = cfg.encode_options();
    const auto tr = encode_dataset(data.splits.train, data.vocab, enc);
    const auto va = encode_dataset(data.splits.val, data.vocab, enc);
    const auto te = encode_dataset(data.splits.test, data.vocab, enc);
    const auto tc = cfg.train_config();
    Rng init_rng(tc.seed);
    auto model = ModelState::init(cfg.model_config(data.vocab.size()), init_rng);
    const auto result = train(model, {&tr, &va, &te}, tc, cfg.loss_config(), [](const EpochRecord& e) {
        std::fprintf(stderr, "epoch %zu loss %.6f val_macro_f1 %.4f\n", e.epoch, e.train_loss, e.val.macro_f1);
    });
    cfg.set("paths.vocab", data.vocab_path);
    save_checkpoint(out / "checkpoint.stx", model, result.optimizer, data.vocab_path, cfg.document());
    write_text(out / "history.json", history_to_json(result));
    if (result.test) write_text(out / "test_report.json", result.test->to_json());
    std::cerr << "best epoch " << result.best_epoch << "; wrote checkpoint.stx, history.json, test_report.json to "
              << out.string() << "\n";
    return kOk;
}

struct Loaded {
    Checkpoint ck;
    RunConfig cfg;
    Vocabulary vocab;
};

Loaded load_for_inference(const Options& opt) {
    std::string ck_path;
    if (auto it = opt.overrides.find("paths.checkpoint"); it != opt.overrides.end()) ck_path = it->second;
    if (ck_path.empty() && !opt.config_file.empty()) ck_path = RunConfig::from_file(opt.config_file).path("checkpoint");
    if (ck_path.empty()) throw ConfigError("--checkpoint (paths.checkpoint) is required");
    Loaded l{load_checkpoint(ck_path), RunConfig(), Vocabulary()};
    l.cfg = resolve(opt, l.ck.config);
    const auto vocab_path = !l.cfg.path("vocab").empty() ? l.cfg.path("vocab") : l.ck.tokenizer;
    l.vocab = Vocabulary::load(vocab_path);
    if (l.vocab.size() != l.ck.model.config.encoder.vocab_size) {
        throw DataError("vocabulary " + vocab_path + " has " + std::to_string(l.vocab.size()) +
                        " tokens but the checkpoint expects " + std::to_string(l.ck.model.config.encoder.vocab_size));
    }
    return l;
}

int cmd_eval(const Options& opt) {
    auto l = load_for_inference(opt);
    const auto out = prepare_out(opt, l.cfg);
    const auto records = load_jsonl_strict(require_path(l.cfg, "corpus"));
    if (records.empty()) throw DataError("corpus is empty");
    const auto data = encode_dataset(records, l.vocab, l.cfg.encode_options());
    const auto report = evaluate_model(l.ck.model, data, l.cfg.train_config().eval_batch_size);
    write_text(out / "eval_report.json", report.to_json());
    std::fprintf(stderr, "accuracy %.4f macro_f1 %.4f roc_auc_macro %.4f\n", report.accuracy, report.macro_f1,
                 report.roc_auc_macro);
    return kOk;
}

int cmd_predict(const Options& opt) {
    auto l = load_for_inference(opt);
    const auto out = prepare_out(opt, l.cfg);
    const auto input = require_path(l.cfg, "input");
    std::ifstream in(input, std::ios::binary);
    if (!in) throw DataError("cannot open " + input);
    std::vector<PostRecord> posts;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            throw DataError(input + ": line " + std::to_string(n) + " is blank");
        }
        posts.push_back({line, 2, std::nullopt});
    }
    const auto data = encode_dataset(posts, l.vocab, l.cfg.encode_options());
    const auto probs = predict_probs(l.ck.model, data, l.cfg.train_config().eval_batch_size);
    const auto labels = argmax_labels(probs);
    std::ostringstream text;
    char buf[96];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %d\n", probs[3 * i], probs[3 * i + 1], probs[3 * i + 2],
                      labels[i]);
        text << buf;
    }
    write_text(out / "predictions.txt", text.str());
    std::cout << text.str();
    return kOk;
}

int cmd_ablate(const Options& opt) {
    auto cfg = resolve(opt);
    const auto out = prepare_out(opt, cfg);
    auto data = prepare_data(cfg, out);
    const auto enc = cfg.encode_options();
    const auto tr = encode_dataset(data.splits.train, data.vocab, enc);
    const auto va = encode_dataset(data.splits.val, data.vocab, enc);
    const auto te = encode_dataset(data.splits.test, data.vocab, enc);
    const auto seeds = cfg.ablation_seeds();
    const auto report = ablate(tr, va, te, cfg.model_config(data.vocab.size()), cfg.train_config(), cfg.loss_config(),
                               seeds, [](const std::string& name, std::uint64_t seed, const EvalReport& r) {
                                   std::fprintf(stderr, "%s seed %llu macro_f1 %.4f\n", name.c_str(),
                                                static_cast<unsigned long long>(seed), r.macro_f1);
                               });
    write_text(out / "ablation.json", report.to_json());
    write_text(out / "ablation.txt", report.to_table());
    std::cout << report.to_table();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SugarTextNet: transformer + cue attention + Bi-GRU classifier for imbalanced post classification"};
    app.require_subcommand(1);
    Options opt;
    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Sub subs[] = {
        {"gen-corpus", "write a synthetic corpus (corpus.jsonl)", cmd_gen_corpus},
        {"tokenize", "train a BPE vocabulary on --corpus (vocab.txt)", cmd_tokenize},
        {"train", "train on --corpus; writes checkpoint.stx, history.json, test_report.json", cmd_train},
        {"eval", "score --checkpoint on --corpus (eval_report.json)", cmd_eval},
        {"predict", "class probabilities for each line of --input (predictions.txt)", cmd_predict},
        {"ablate", "four-configuration ablation over ablation.seeds (ablation.json, ablation.txt)", cmd_ablate},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> commands;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, opt);
        commands.emplace_back(cmd, &s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    try {
        for (const auto& [cmd, sub] : commands) {
            if (cmd->parsed()) return sub->run(opt);
        }
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    }
}
