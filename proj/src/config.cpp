#include "stn/config.hpp"

#include <fstream>
#include <set>

#include "stn/errors.hpp"

namespace stn {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string> split_key(std::string_view key) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        parts.emplace_back(key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    return parts;
}

const ConfigKey& find_key(std::string_view name) {
    for (const auto& k : config_keys()) {
        if (k.name == name) return k;
    }
    throw ConfigError("unknown configuration key '" + std::string(name) + "'");
}

bool is_uint(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

bool matches(KeyKind kind, const json& v) {
    auto all = [&](auto pred) { return v.is_array() && std::all_of(v.begin(), v.end(), pred); };
    switch (kind) {
        case KeyKind::uint: return is_uint(v);
        case KeyKind::real: return v.is_number();
        case KeyKind::boolean: return v.is_boolean();
        case KeyKind::string: return v.is_string();
        case KeyKind::real_list: return all([](const json& x) { return x.is_number(); });
        case KeyKind::uint_list: return all([](const json& x) { return is_uint(x); });
        case KeyKind::string_list: return all([](const json& x) { return x.is_string(); });
        case KeyKind::opt_real: return v.is_null() || v.is_number();
        case KeyKind::opt_uint: return v.is_null() || is_uint(v);
        case KeyKind::opt_real_list: return v.is_null() || all([](const json& x) { return x.is_number(); });
    }
    return false;
}

const char* kind_name(KeyKind kind) {
    switch (kind) {
        case KeyKind::uint: return "a non-negative integer";
        case KeyKind::real: return "a number";
        case KeyKind::boolean: return "true or false";
        case KeyKind::string: return "a string";
        case KeyKind::real_list: return "a list of numbers";
        case KeyKind::uint_list: return "a list of non-negative integers";
        case KeyKind::string_list: return "a list of strings";
        case KeyKind::opt_real: return "a number or null";
        case KeyKind::opt_uint: return "a non-negative integer or null";
        case KeyKind::opt_real_list: return "a list of numbers or null";
    }
    return "?";
}

json& slot(json& doc, std::string_view key) {
    json* node = &doc;
    for (const auto& part : split_key(key)) node = &(*node)[part];
    return *node;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, const json*>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string name = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            flatten(*it, name, out);
        } else {
            out.emplace_back(name, &*it);
        }
    }
}

json defaults_document() {
    const auto syn = SyntheticSpec::defaults();
    const TrainConfig tc;
    json d;
    d["tokenizer"] = {{"vocab_size", 512}, {"max_len", kDefaultMaxLen}, {"add_bos_eos", false}, {"min_tokens", 5}};
    d["encoder"] = {{"d_model", 64}, {"n_heads", 4}, {"n_layers", 2}, {"ffn_dim", 256}, {"dropout", 0.3}};
    d["cue"] = {{"mode", "learned"}};
    d["phrase"] = {{"mode", "bigru"}, {"hidden", 32}};
    d["head"] = {{"hidden", 32}, {"dropout", 0.3}, {"fuse_cue_embedding", false}};
    d["loss"] = {{"kind", "cafl"}, {"gamma", 2.0}, {"alpha", nullptr}, {"all_class_sum", false}};
    d["cafl"] = {{"context_mode", "sigmoid_mean"}};
    d["synthetic"] = {{"n_total", syn.n_total},
                      {"priors", syn.priors},
                      {"ambiguity_rate", syn.ambiguity_rate},
                      {"marker_noise", syn.marker_noise},
                      {"min_words", syn.min_words},
                      {"max_words", syn.max_words},
                      {"seed", syn.seed},
                      {"first_person", syn.first_person},
                      {"third_person", syn.third_person},
                      {"cues", syn.cues},
                      {"filler", syn.filler}};
    d["split"] = {{"seed", 7}, {"ratios", {0.8, 0.1, 0.1}}};
    d["train"] = {{"lr_max", tc.lr_max},
                  {"batch_size", tc.batch_size},
                  {"epochs", tc.epochs},
                  {"seed", tc.seed},
                  {"weight_decay", tc.weight_decay},
                  {"adam_beta1", tc.adam_beta1},
                  {"adam_beta2", tc.adam_beta2},
                  {"adam_eps", tc.adam_eps},
                  {"grad_clip_norm", *tc.grad_clip_norm},
                  {"early_stop_patience", nullptr},
                  {"eval_batch_size", tc.eval_batch_size}};
    d["ablation"] = {{"seeds", {1, 2, 3, 4, 5}}};
    d["paths"] = {{"corpus", ""}, {"vocab", ""}, {"checkpoint", ""}, {"input", ""}};
    return d;
}

template <typename T>
T as(const json& v) {
    return v.get<T>();
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"tokenizer.vocab_size", KeyKind::uint, "BPE vocabulary size including specials and bytes"},
        {"tokenizer.max_len", KeyKind::uint, "fixed sequence length"},
        {"tokenizer.add_bos_eos", KeyKind::boolean, "wrap posts in <bos>/<eos>"},
        {"tokenizer.min_tokens", KeyKind::uint, "drop posts with fewer tokens"},
        {"encoder.d_model", KeyKind::uint, "model width D"},
        {"encoder.n_heads", KeyKind::uint, "attention heads"},
        {"encoder.n_layers", KeyKind::uint, "transformer blocks"},
        {"encoder.ffn_dim", KeyKind::uint, "feed-forward width"},
        {"encoder.dropout", KeyKind::real, "encoder dropout rate"},
        {"cue.mode", KeyKind::string, "learned | uniform"},
        {"phrase.mode", KeyKind::string, "bigru | mean_pool"},
        {"phrase.hidden", KeyKind::uint, "GRU hidden size per direction"},
        {"head.hidden", KeyKind::uint, "classifier hidden size"},
        {"head.dropout", KeyKind::real, "classifier dropout rate"},
        {"head.fuse_cue_embedding", KeyKind::boolean, "feed the cue embedding E to the head"},
        {"loss.kind", KeyKind::string, "cafl | focal | cross_entropy | weighted_ce"},
        {"loss.gamma", KeyKind::real, "focusing parameter"},
        {"loss.alpha", KeyKind::opt_real_list, "class weights; null = inverse training frequency"},
        {"loss.all_class_sum", KeyKind::boolean, "sum the focal term over all classes"},
        {"cafl.context_mode", KeyKind::string, "sigmoid_mean | paper_literal"},
        {"synthetic.n_total", KeyKind::uint, "posts to generate"},
        {"synthetic.priors", KeyKind::real_list, "class priors"},
        {"synthetic.ambiguity_rate", KeyKind::real, "chance of a cue in a class-2 post"},
        {"synthetic.marker_noise", KeyKind::real, "chance of a stray marker per word"},
        {"synthetic.min_words", KeyKind::uint, "shortest post in words"},
        {"synthetic.max_words", KeyKind::uint, "longest post in words"},
        {"synthetic.seed", KeyKind::uint, "generator seed"},
        {"synthetic.first_person", KeyKind::string_list, "first-person markers"},
        {"synthetic.third_person", KeyKind::string_list, "third-person markers"},
        {"synthetic.cues", KeyKind::string_list, "transactional cues"},
        {"synthetic.filler", KeyKind::string_list, "filler words"},
        {"split.seed", KeyKind::uint, "stratified split seed"},
        {"split.ratios", KeyKind::real_list, "train/val/test shares"},
        {"train.lr_max", KeyKind::real, "peak learning rate"},
        {"train.batch_size", KeyKind::uint, "training batch size"},
        {"train.epochs", KeyKind::uint, "epochs"},
        {"train.seed", KeyKind::uint, "model init, shuffling and dropout seed"},
        {"train.weight_decay", KeyKind::real, "decoupled weight decay"},
        {"train.adam_beta1", KeyKind::real, "AdamW beta1"},
        {"train.adam_beta2", KeyKind::real, "AdamW beta2"},
        {"train.adam_eps", KeyKind::real, "AdamW epsilon"},
        {"train.grad_clip_norm", KeyKind::opt_real, "global gradient norm cap; null disables"},
        {"train.early_stop_patience", KeyKind::opt_uint, "epochs without validation gain; null disables"},
        {"train.eval_batch_size", KeyKind::uint, "evaluation batch size"},
        {"ablation.seeds", KeyKind::uint_list, "seeds for the ablation runs"},
        {"paths.corpus", KeyKind::string, "corpus file (JSON lines)"},
        {"paths.vocab", KeyKind::string, "vocabulary file"},
        {"paths.checkpoint", KeyKind::string, "checkpoint file"},
        {"paths.input", KeyKind::string, "text file for predict, one post per line"},
    };
    return keys;
}

RunConfig::RunConfig() : doc_(defaults_document()) {}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    RunConfig cfg;
    std::vector<std::pair<std::string, const json*>> leaves;
    flatten(j, "", leaves);
    for (const auto& [name, value] : leaves) cfg.set_json(name, *value);
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

void RunConfig::set_json(std::string_view key, const json& value) {
    const auto& k = find_key(key);
    if (!matches(k.kind, value)) {
        throw ConfigError("configuration key '" + k.name + "' expects " + kind_name(k.kind) + ", got " + value.dump());
    }
    slot(doc_, key) = value;
}

void RunConfig::set(std::string_view key, std::string_view text) {
    const auto& k = find_key(key);
    if (k.kind == KeyKind::string) {
        set_json(key, json(std::string(text)));
        return;
    }
    json value;
    try {
        value = json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw ConfigError("configuration key '" + k.name + "' expects " + kind_name(k.kind) + ", got '" +
                          std::string(text) + "'");
    }
    set_json(key, value);
}

const json& RunConfig::at(std::string_view key) const {
    find_key(key);
    const json* node = &doc_;
    for (const auto& part : split_key(key)) node = &node->at(part);
    return *node;
}

EncodeOptions RunConfig::encode_options() const {
    EncodeOptions o;
    o.max_len = as<std::size_t>(at("tokenizer.max_len"));
    o.add_bos_eos = as<bool>(at("tokenizer.add_bos_eos"));
    if (o.max_len == 0) throw ConfigError("tokenizer.max_len must be positive");
    return o;
}

std::size_t RunConfig::vocab_size() const { return as<std::size_t>(at("tokenizer.vocab_size")); }
std::size_t RunConfig::min_tokens() const { return as<std::size_t>(at("tokenizer.min_tokens")); }

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.encoder.vocab_size = vocab_size;
    m.encoder.max_len = as<std::size_t>(at("tokenizer.max_len"));
    m.encoder.d_model = as<std::size_t>(at("encoder.d_model"));
    m.encoder.n_heads = as<std::size_t>(at("encoder.n_heads"));
    m.encoder.n_layers = as<std::size_t>(at("encoder.n_layers"));
    m.encoder.ffn_dim = as<std::size_t>(at("encoder.ffn_dim"));
    m.encoder.dropout = as<double>(at("encoder.dropout"));
    m.gru_hidden = as<std::size_t>(at("phrase.hidden"));
    m.head_hidden = as<std::size_t>(at("head.hidden"));
    m.head_dropout = as<double>(at("head.dropout"));
    m.fuse_cue_embedding = as<bool>(at("head.fuse_cue_embedding"));
    try {
        m.context_mode = parse_context_mode(as<std::string>(at("cafl.context_mode")));
        m.cue_mode = parse_cue_mode(as<std::string>(at("cue.mode")));
        m.phrase_mode = parse_phrase_mode(as<std::string>(at("phrase.mode")));
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

LossConfig RunConfig::loss_config() const {
    LossConfig l;
    try {
        l.kind = parse_loss_kind(as<std::string>(at("loss.kind")));
        l.context_mode = parse_context_mode(as<std::string>(at("cafl.context_mode")));
        l.gamma = as<double>(at("loss.gamma"));
        l.all_class_sum = as<bool>(at("loss.all_class_sum"));
        const auto& a = at("loss.alpha");
        if (!a.is_null()) {
            if (a.size() != 3) throw ConfigError("loss.alpha must have 3 entries");
            l.alpha = ClassWeights{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        }
        l.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return l;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lr_max = as<double>(at("train.lr_max"));
    t.batch_size = as<std::size_t>(at("train.batch_size"));
    t.epochs = as<std::size_t>(at("train.epochs"));
    t.seed = as<std::uint64_t>(at("train.seed"));
    t.weight_decay = as<double>(at("train.weight_decay"));
    t.adam_beta1 = as<double>(at("train.adam_beta1"));
    t.adam_beta2 = as<double>(at("train.adam_beta2"));
    t.adam_eps = as<double>(at("train.adam_eps"));
    const auto& clip = at("train.grad_clip_norm");
    t.grad_clip_norm = clip.is_null() ? std::nullopt : std::optional<double>(clip.get<double>());
    const auto& pat = at("train.early_stop_patience");
    t.early_stop_patience = pat.is_null() ? std::nullopt : std::optional<std::size_t>(pat.get<std::size_t>());
    t.eval_batch_size = as<std::size_t>(at("train.eval_batch_size"));
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s;
    s.n_total = as<std::size_t>(at("synthetic.n_total"));
    const auto& p = at("synthetic.priors");
    if (p.size() != 3) throw ConfigError("synthetic.priors must have 3 entries");
    s.priors = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    s.ambiguity_rate = as<double>(at("synthetic.ambiguity_rate"));
    s.marker_noise = as<double>(at("synthetic.marker_noise"));
    s.min_words = as<std::size_t>(at("synthetic.min_words"));
    s.max_words = as<std::size_t>(at("synthetic.max_words"));
    s.seed = as<std::uint64_t>(at("synthetic.seed"));
    s.first_person = as<std::vector<std::string>>(at("synthetic.first_person"));
    s.third_person = as<std::vector<std::string>>(at("synthetic.third_person"));
    s.cues = as<std::vector<std::string>>(at("synthetic.cues"));
    s.filler = as<std::vector<std::string>>(at("synthetic.filler"));
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

SplitRatios RunConfig::split_ratios() const {
    const auto& r = at("split.ratios");
    if (r.size() != 3) throw ConfigError("split.ratios must have 3 entries");
    return {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
}

std::uint64_t RunConfig::split_seed() const { return as<std::uint64_t>(at("split.seed")); }

std::vector<std::uint64_t> RunConfig::ablation_seeds() const {
    auto seeds = as<std::vector<std::uint64_t>>(at("ablation.seeds"));
    if (seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
    return seeds;
}

std::string RunConfig::path(std::string_view name) const { return as<std::string>(at("paths." + std::string(name))); }

}  // namespace stn
