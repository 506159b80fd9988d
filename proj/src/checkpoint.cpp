#include "stn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "stn/errors.hpp"

namespace stn {

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["encoder"] = {{"vocab_size", cfg.encoder.vocab_size}, {"max_len", cfg.encoder.max_len},
                    {"d_model", cfg.encoder.d_model},       {"n_heads", cfg.encoder.n_heads},
                    {"n_layers", cfg.encoder.n_layers},     {"ffn_dim", cfg.encoder.ffn_dim},
                    {"dropout", cfg.encoder.dropout}};
    j["gru_hidden"] = cfg.gru_hidden;
    j["head_hidden"] = cfg.head_hidden;
    j["head_dropout"] = cfg.head_dropout;
    j["fuse_cue_embedding"] = cfg.fuse_cue_embedding;
    j["context_mode"] = to_string(cfg.context_mode);
    j["cue_mode"] = to_string(cfg.cue_mode);
    j["phrase_mode"] = to_string(cfg.phrase_mode);
    return j;
}

ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig cfg;
    const auto& e = j.at("encoder");
    cfg.encoder.vocab_size = e.at("vocab_size").get<std::size_t>();
    cfg.encoder.max_len = e.at("max_len").get<std::size_t>();
    cfg.encoder.d_model = e.at("d_model").get<std::size_t>();
    cfg.encoder.n_heads = e.at("n_heads").get<std::size_t>();
    cfg.encoder.n_layers = e.at("n_layers").get<std::size_t>();
    cfg.encoder.ffn_dim = e.at("ffn_dim").get<std::size_t>();
    cfg.encoder.dropout = e.at("dropout").get<double>();
    cfg.gru_hidden = j.at("gru_hidden").get<std::size_t>();
    cfg.head_hidden = j.at("head_hidden").get<std::size_t>();
    cfg.head_dropout = j.at("head_dropout").get<double>();
    cfg.fuse_cue_embedding = j.at("fuse_cue_embedding").get<bool>();
    cfg.context_mode = parse_context_mode(j.at("context_mode").get<std::string>());
    cfg.cue_mode = parse_cue_mode(j.at("cue_mode").get<std::string>());
    cfg.phrase_mode = parse_phrase_mode(j.at("phrase_mode").get<std::string>());
    return cfg;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_blob(std::string& out, const std::string& name, const Shape& shape, std::span<const double> values) {
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le(out, static_cast<std::uint64_t>(d));
    for (double v : values) put_le(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string_view line() {
        const auto end = bytes_.find('\n', pos_);
        if (end == std::string_view::npos) throw DataError("checkpoint: truncated header");
        auto s = bytes_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated file");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

struct Blob {
    Shape shape;
    std::vector<double> values;
};

void fill(const std::map<std::string, Blob>& blobs, const std::string& key, const Shape& shape, std::span<double> dst) {
    const auto it = blobs.find(key);
    if (it == blobs.end()) throw DataError("checkpoint: missing blob " + key);
    if (it->second.shape != shape) {
        throw DataError("checkpoint: blob " + key + " has shape " + shape_str(it->second.shape) + ", expected " +
                        shape_str(shape));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
}

}  // namespace

std::string serialize_checkpoint(const ModelState& model, const AdamState& optimizer, const std::string& tokenizer,
                                 const nlohmann::ordered_json& config) {
    const auto params = model.parameters();
    if (optimizer.m.size() != params.size() || optimizer.v.size() != params.size()) {
        throw std::invalid_argument("checkpoint: optimizer state does not match the model");
    }
    nlohmann::ordered_json meta;
    meta["format_version"] = kCheckpointVersion;
    meta["model"] = model_config_to_json(model.config);
    meta["step"] = optimizer.step;
    meta["tokenizer"] = tokenizer;
    meta["config"] = config;
    auto names = nlohmann::ordered_json::array();
    for (const auto& p : params) names.push_back(p.name);
    meta["parameters"] = names;
    const std::string text = meta.dump(2);

    std::string out = std::string(kCheckpointMagic) + "\n" + std::to_string(text.size()) + "\n" + text;
    for (const auto& p : params) put_blob(out, "param/" + p.name, p.tensor.shape(), p.tensor.values());
    for (std::size_t i = 0; i < params.size(); ++i) {
        put_blob(out, "adam.m/" + params[i].name, params[i].tensor.shape(), optimizer.m[i]);
        put_blob(out, "adam.v/" + params[i].name, params[i].tensor.shape(), optimizer.v[i]);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const AdamState& optimizer,
                     const std::string& tokenizer, const nlohmann::ordered_json& config) {
    const auto bytes = serialize_checkpoint(model, optimizer, tokenizer, config);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.line() != kCheckpointMagic) throw DataError("checkpoint: bad magic (expected STXN1)");
    std::size_t meta_len = 0;
    try {
        meta_len = std::stoull(std::string(in.line()));
    } catch (const std::exception&) {
        throw DataError("checkpoint: bad metadata length");
    }
    nlohmann::ordered_json meta;
    try {
        meta = nlohmann::ordered_json::parse(in.take(meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
    }

    Checkpoint ck;
    try {
        if (meta.at("format_version").get<int>() != kCheckpointVersion) {
            throw DataError("checkpoint: unsupported format version " + meta.at("format_version").dump());
        }
        const auto cfg = model_config_from_json(meta.at("model"));
        Rng unused(0);
        ck.model = ModelState::init(cfg, unused);
        ck.optimizer.step = meta.at("step").get<std::uint64_t>();
        ck.tokenizer = meta.at("tokenizer").get<std::string>();
        ck.config = meta.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("checkpoint: bad model configuration: ") + e.what());
    }

    std::map<std::string, Blob> blobs;
    while (!in.done()) {
        const auto name_len = in.get<std::uint32_t>();
        std::string name(in.take(name_len));
        Blob b;
        const auto rank = in.get<std::uint32_t>();
        if (rank > 8) throw DataError("checkpoint: blob " + name + " has implausible rank");
        for (std::uint32_t i = 0; i < rank; ++i) b.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
        const std::size_t n = shape_numel(b.shape);
        b.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) b.values[i] = std::bit_cast<double>(in.get<std::uint64_t>());
        if (!blobs.emplace(name, std::move(b)).second) throw DataError("checkpoint: duplicate blob " + name);
    }

    const auto params = ck.model.parameters();
    ck.optimizer.m.resize(params.size());
    ck.optimizer.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        fill(blobs, "param/" + params[i].name, t.shape(), t.mutable_values());
        ck.optimizer.m[i].resize(t.numel());
        ck.optimizer.v[i].resize(t.numel());
        fill(blobs, "adam.m/" + params[i].name, t.shape(), ck.optimizer.m[i]);
        fill(blobs, "adam.v/" + params[i].name, t.shape(), ck.optimizer.v[i]);
    }
    if (blobs.size() != params.size() * 3) throw DataError("checkpoint: unexpected extra blobs");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace stn
