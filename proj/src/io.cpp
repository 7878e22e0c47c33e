#include "pclvd/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "pclvd/error.hpp"

namespace pclvd {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

const char* to_string(Split s) noexcept {
    switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "'");
}

void Dataset::validate() const {
    if (values.size() != rows * dims) throw DataError("dataset size does not match n x dims");
    if (kind == DatasetKind::Images) {
        if (static_cast<std::size_t>(height) * width != dims) throw DataError("image dims must equal height x width");
        if (num_categories > 256) throw DataError("image values must fit in 8 bits");
    }
    for (std::uint32_t v : values) {
        if (v >= num_categories) {
            throw DataError("dataset value " + std::to_string(v) + " is outside [0, " + std::to_string(num_categories) +
                            ")");
        }
    }
}

DataMatrix Dataset::to_matrix() const {
    DataMatrix m(rows, dims);
    std::transform(values.begin(), values.end(), m.values.begin(),
                   [](std::uint32_t v) { return static_cast<std::int32_t>(v); });
    return m;
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
    if (first + count > rows) throw ShapeError("dataset subset out of range");
    Dataset out = *this;
    out.rows = count;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(first * dims),
                      values.begin() + static_cast<std::ptrdiff_t>((first + count) * dims));
    return out;
}

Dataset window_tokens(std::span<const std::uint32_t> stream, std::size_t seq_len, std::uint32_t vocab_size,
                      std::size_t stride, Split split) {
    if (seq_len == 0) throw PreconditionError("window length must be positive");
    if (stride == 0) throw PreconditionError("window stride must be positive");
    if (stream.size() < seq_len) {
        throw DataError("empty dataset: stream of " + std::to_string(stream.size()) + " tokens is shorter than T=" +
                        std::to_string(seq_len));
    }
    Dataset d;
    d.kind = DatasetKind::Tokens;
    d.split = split;
    d.dims = seq_len;
    d.num_categories = vocab_size;
    for (std::size_t s = 0; s + seq_len <= stream.size(); s += stride) {
        d.values.insert(d.values.end(), stream.begin() + static_cast<std::ptrdiff_t>(s),
                        stream.begin() + static_cast<std::ptrdiff_t>(s + seq_len));
        ++d.rows;
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------

namespace {

class Writer {
public:
    void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
    template <class T>
    void put(T v) {
        std::uint8_t b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        bytes_.insert(bytes_.end(), b, b + sizeof(T));
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(const char* m) {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) throw DataError(what_ + ": bad magic, expected " + m);
        pos_ += 4;
    }
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    void expect_end() const {
        if (pos_ != bytes_.size()) throw DataError(what_ + ": trailing bytes after payload");
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError(what_ + ": truncated file");
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

void expect_version(std::uint32_t v, const std::string& what) {
    if (v != 1) throw DataError(what + ": unsupported version " + std::to_string(v));
}

// Guards n * d against overflow and absurd sizes before allocating.
std::size_t checked_count(std::uint64_t n, std::uint64_t d, std::size_t elem, std::size_t available,
                          const std::string& what) {
    if (d != 0 && n > available / d / elem) throw DataError(what + ": header declares more data than the file holds");
    return static_cast<std::size_t>(n * d);
}

} // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& e) {
    e.validate();
    Writer w;
    w.magic("PCEM");
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(e.rows);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.dims));
    w.put<std::uint32_t>(0);
    for (float x : e.values) w.put<float>(x);
    return w.take();
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "PCEM");
    r.expect_magic("PCEM");
    expect_version(r.get<std::uint32_t>(), "PCEM");
    const auto n = r.get<std::uint64_t>();
    const auto d = r.get<std::uint32_t>();
    const auto dtype = r.get<std::uint32_t>();
    if (dtype != 0) throw DataError("PCEM: unsupported dtype " + std::to_string(dtype));
    const std::size_t count = checked_count(n, d, sizeof(float), bytes.size(), "PCEM");
    EmbeddingMatrix e;
    e.rows = static_cast<std::size_t>(n);
    e.dims = d;
    e.values.resize(count);
    const auto payload = r.raw(count * sizeof(float));
    std::memcpy(e.values.data(), payload.data(), payload.size());
    r.expect_end();
    e.validate();
    return e;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& e) {
    write_bytes(path, encode_embeddings(e));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    auto e = decode_embeddings(read_bytes(path));
    e.provenance = path.filename().string();
    return e;
}

void write_assignments(const std::filesystem::path& path, const LVAssignment& z) {
    z.validate();
    Writer w;
    w.magic("PCLV");
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(z.rows);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(z.cols()));
    for (auto c : z.cardinalities) w.put<std::uint32_t>(c);
    for (auto v : z.values) w.put<std::uint32_t>(v);
    write_bytes(path, w.take());
}

LVAssignment read_assignments(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    Reader r(bytes, "PCLV");
    r.expect_magic("PCLV");
    expect_version(r.get<std::uint32_t>(), "PCLV");
    const auto n = r.get<std::uint64_t>();
    const auto k = r.get<std::uint32_t>();
    LVAssignment z;
    z.rows = static_cast<std::size_t>(n);
    checked_count(k, 1, sizeof(std::uint32_t), bytes.size(), "PCLV");
    for (std::uint32_t i = 0; i < k; ++i) z.cardinalities.push_back(r.get<std::uint32_t>());
    z.values.resize(checked_count(n, k, sizeof(std::uint32_t), bytes.size(), "PCLV"));
    for (auto& v : z.values) v = r.get<std::uint32_t>();
    r.expect_end();
    z.validate();
    return z;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
    d.validate();
    Writer w;
    w.magic("PCDS");
    w.put<std::uint32_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.split));
    w.put<std::uint64_t>(d.rows);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.dims));
    w.put<std::uint32_t>(d.height);
    w.put<std::uint32_t>(d.width);
    w.put<std::uint32_t>(d.num_categories);
    for (auto v : d.values) {
        if (d.kind == DatasetKind::Images) {
            w.put<std::uint8_t>(static_cast<std::uint8_t>(v));
        } else {
            w.put<std::uint32_t>(v);
        }
    }
    write_bytes(path, w.take());
}

Dataset read_dataset(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    Reader r(bytes, "PCDS");
    r.expect_magic("PCDS");
    expect_version(r.get<std::uint32_t>(), "PCDS");
    Dataset d;
    const auto kind = r.get<std::uint32_t>();
    if (kind > 1) throw DataError("PCDS: unknown dataset kind " + std::to_string(kind));
    d.kind = static_cast<DatasetKind>(kind);
    const auto split = r.get<std::uint32_t>();
    if (split > 2) throw DataError("PCDS: unknown split " + std::to_string(split));
    d.split = static_cast<Split>(split);
    const auto n = r.get<std::uint64_t>();
    d.dims = r.get<std::uint32_t>();
    d.height = r.get<std::uint32_t>();
    d.width = r.get<std::uint32_t>();
    d.num_categories = r.get<std::uint32_t>();
    const std::size_t elem = d.kind == DatasetKind::Images ? 1 : 4;
    d.values.resize(checked_count(n, d.dims, elem, bytes.size(), "PCDS"));
    d.rows = static_cast<std::size_t>(n);
    for (auto& v : d.values) v = d.kind == DatasetKind::Images ? r.get<std::uint8_t>() : r.get<std::uint32_t>();
    r.expect_end();
    d.validate();
    return d;
}

Dataset read_text_dataset(const std::filesystem::path& path, DatasetKind kind, std::uint32_t num_categories) {
    std::istringstream in(read_text(path));
    Dataset d;
    d.kind = kind;
    std::string line;
    std::uint32_t max_value = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::uint32_t> row;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            long long v = 0;
            try {
                v = std::stoll(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size() || v < 0 || v > 0xFFFFFFFFLL) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad value '" + tok + "'");
            }
            row.push_back(static_cast<std::uint32_t>(v));
            max_value = std::max(max_value, row.back());
        }
        if (row.empty()) continue;
        if (d.rows == 0) d.dims = row.size();
        if (row.size() != d.dims) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(d.dims) +
                            " values, got " + std::to_string(row.size()));
        }
        d.values.insert(d.values.end(), row.begin(), row.end());
        ++d.rows;
    }
    if (d.rows == 0) throw DataError(path.string() + ": empty dataset");
    d.num_categories = num_categories ? num_categories : max_value + 1;
    if (kind == DatasetKind::Images) {
        d.height = 1;
        d.width = static_cast<std::uint32_t>(d.dims);
    }
    d.validate();
    return d;
}

void write_text_dataset(const std::filesystem::path& path, const Dataset& d) {
    std::ostringstream out;
    for (std::size_t r = 0; r < d.rows; ++r) {
        for (std::size_t c = 0; c < d.dims; ++c) out << (c ? " " : "") << d.at(r, c);
        out << '\n';
    }
    write_text(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, "PCDS", 4) == 0) return read_dataset(path);
    return read_text_dataset(path);
}

// ---------------------------------------------------------------------------

std::string mst_to_json(const SpanningTree& t) {
    nlohmann::json j;
    j["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : t.edges) j["edges"].push_back({a, b});
    j["root"] = t.root;
    j["ancestor_order"] = t.ancestor_order();
    return j.dump(2);
}

SpanningTree mst_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
        const auto root = j.at("root").get<std::size_t>();
        const std::size_t n = edges.size() + 1;
        auto t = tree_from_edges(n, std::move(edges), root);
        if (j.contains("ancestor_order")) {
            const auto order = j["ancestor_order"].get<std::vector<std::size_t>>();
            // Any order that lists every node after its parent is accepted.
            std::vector<char> seen(t.num_nodes, 0);
            if (order.size() != t.num_nodes) throw DataError("MST ancestor_order must list every node once");
            for (std::size_t v : order) {
                if (v >= t.num_nodes || seen[v]) throw DataError("MST ancestor_order must list every node once");
                if (t.parent[v] >= 0 && !seen[static_cast<std::size_t>(t.parent[v])]) {
                    throw DataError("MST ancestor_order lists node " + std::to_string(v) + " before its parent");
                }
                seen[v] = 1;
            }
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed MST JSON: ") + e.what());
    } catch (const PreconditionError& e) {
        throw DataError(std::string("MST JSON is not a tree: ") + e.what());
    }
}

void write_mst(const std::filesystem::path& path, const SpanningTree& t) { write_text(path, mst_to_json(t) + "\n"); }

SpanningTree read_mst(const std::filesystem::path& path) { return mst_from_json(read_text(path)); }

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

double compute_bpd(double ll_total, std::size_t samples, std::size_t dims) {
    if (dims == 0) throw PreconditionError("bpd needs dims > 0");
    return -ll_total / (std::numbers::ln2 * static_cast<double>(samples) * static_cast<double>(dims));
}

double compute_perplexity(double ll_total, std::size_t token_count) {
    if (token_count == 0) throw PreconditionError("perplexity needs at least one token");
    return std::exp(-ll_total / static_cast<double>(token_count));
}

Metrics make_metrics(double ll_total, std::size_t samples, std::size_t dims) {
    return {ll_total, samples, dims, compute_bpd(ll_total, samples, dims), compute_perplexity(ll_total, samples * dims)};
}

} // namespace pclvd
