#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pclvd/circuit.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/tree.hpp"

namespace pclvd {

enum class DatasetKind : std::uint32_t { Tokens = 0, Images = 1 };
enum class Split : std::uint32_t { Train = 0, Valid = 1, Test = 2 };

const char* to_string(Split s) noexcept;
Split parse_split(const std::string& s);

/// Token sequences (n x T) or 8-bit images (n x H*W, channel-flattened).
struct Dataset {
    DatasetKind kind = DatasetKind::Tokens;
    Split split = Split::Train;
    std::size_t rows = 0;
    std::size_t dims = 0;
    std::uint32_t height = 0;  // images only
    std::uint32_t width = 0;
    std::uint32_t num_categories = 0;  // vocabulary size or pixel levels
    std::vector<std::uint32_t> values;

    std::uint32_t at(std::size_t r, std::size_t c) const { return values[r * dims + c]; }
    void validate() const;
    DataMatrix to_matrix() const;
    Dataset subset(std::size_t first, std::size_t count) const;
};

/// Every length-T window of the stream, in order.
Dataset window_tokens(std::span<const std::uint32_t> stream, std::size_t seq_len, std::uint32_t vocab_size,
                      std::size_t stride = 1, Split split = Split::Train);

// Binary containers. All integers and floats are little-endian.
//   PCEM: "PCEM" u32 version=1, u64 n, u32 d, u32 dtype=0, n*d f32
//   PCLV: "PCLV" u32 version=1, u64 n, u32 k, k u32 cardinalities, n*k u32
//   PCDS: "PCDS" u32 version=1, u32 kind, u32 split, u64 n, u32 dims,
//         u32 height, u32 width, u32 num_categories, then n*dims values
//         (u32 for tokens, u8 for images)
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& e);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& e);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);

void write_assignments(const std::filesystem::path& path, const LVAssignment& z);
LVAssignment read_assignments(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);

/// Whitespace-separated integers, one sample per line; '#' starts a comment.
/// num_categories 0 -> max value + 1.
Dataset read_text_dataset(const std::filesystem::path& path, DatasetKind kind = DatasetKind::Tokens,
                          std::uint32_t num_categories = 0);
void write_text_dataset(const std::filesystem::path& path, const Dataset& d);

/// Dispatches on the magic bytes: PCDS binary, otherwise plain text.
Dataset load_dataset(const std::filesystem::path& path);

/// {"edges": [[a, b], ...], "root": r, "ancestor_order": [...]}
std::string mst_to_json(const SpanningTree& t);
SpanningTree mst_from_json(const std::string& text);
void write_mst(const std::filesystem::path& path, const SpanningTree& t);
SpanningTree read_mst(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

struct Metrics {
    double ll_total = 0.0;
    std::size_t samples = 0;
    std::size_t dims = 0;
    double bpd = 0.0;
    double perplexity = 0.0;
};

double compute_bpd(double ll_total, std::size_t samples, std::size_t dims);
double compute_perplexity(double ll_total, std::size_t token_count);
Metrics make_metrics(double ll_total, std::size_t samples, std::size_t dims);

} // namespace pclvd
