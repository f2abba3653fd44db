#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molepair/numerics.hpp"

namespace molepair {

enum class DistTag { kId, kOod };
enum class SplitTag { kTrain, kVal, kTest };

inline constexpr std::array<DistTag, 2> kAllDists = {DistTag::kId, DistTag::kOod};
inline constexpr std::array<SplitTag, 3> kAllSplits = {SplitTag::kTrain, SplitTag::kVal,
                                                       SplitTag::kTest};

std::string_view to_string(DistTag tag);
std::string_view to_string(SplitTag tag);
DistTag parse_dist_tag(std::string_view text);    // "ID" | "OOD"
SplitTag parse_split_tag(std::string_view text);  // "train" | "val" | "test"

struct RecordMeta {
    std::string id;
    DistTag dist = DistTag::kId;
    SplitTag split = SplitTag::kTrain;
    std::optional<double> label;

    bool operator==(const RecordMeta&) const = default;
};

/// Labeled embedding vectors. Row i of `embeddings()` belongs to `records()[i]`.
class EmbeddingSet {
public:
    EmbeddingSet() = default;
    /// Validates the invariants (dim > 0, finite entries, unique ids).
    EmbeddingSet(std::size_t dim, std::vector<RecordMeta> records, Matrix embeddings);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    const std::vector<RecordMeta>& records() const noexcept { return records_; }
    const Matrix& embeddings() const noexcept { return embeddings_; }

    /// Row indices of one (dist, split) cell, ascending.
    std::vector<std::size_t> indices(DistTag dist, SplitTag split) const;
    std::size_t count(DistTag dist, SplitTag split) const;

    /// Sub-set with the given rows, in order.
    EmbeddingSet subset(const std::vector<std::size_t>& rows) const;

    /// Throws CapacityError unless `split` has at least one ID and one OOD record.
    void require_both_tags(SplitTag split, std::string_view purpose) const;

    bool operator==(const EmbeddingSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<RecordMeta> records_;
    Matrix embeddings_;
};

/// Per-cell record counts plus provenance.
struct SplitManifest {
    // counts[dist][split]
    std::array<std::array<std::size_t, 3>, 2> counts{};
    std::uint64_t seed = 0;
    std::vector<std::string> source_files;

    std::size_t& at(DistTag d, SplitTag s) {
        return counts[static_cast<int>(d)][static_cast<int>(s)];
    }
    std::size_t at(DistTag d, SplitTag s) const {
        return counts[static_cast<int>(d)][static_cast<int>(s)];
    }

    static SplitManifest from_set(const EmbeddingSet& set, std::uint64_t seed = 0,
                                  std::vector<std::string> sources = {});
    /// Throws SchemaError if any count disagrees with `set`.
    void validate_against(const EmbeddingSet& set) const;

    std::string to_json() const;
    static SplitManifest from_json(std::string_view text);

    bool operator==(const SplitManifest&) const = default;
};

// CSV: header `id,dist,split,label,e0..e{d-1}`; empty label = absent.
EmbeddingSet load_csv(const std::filesystem::path& path);
EmbeddingSet parse_csv(std::string_view text);
void save_csv(const EmbeddingSet& set, const std::filesystem::path& path);

// Binary: "MPER", u32 version, u32 n, u32 dim, n*dim float32 (all little-endian),
// then a UTF-8 JSON trailer {"ids","dist","split","labels"} to end of file.
inline constexpr std::uint32_t kBinaryVersion = 1;
EmbeddingSet load_binary(const std::filesystem::path& path);
EmbeddingSet decode_binary(std::string_view bytes);
void save_binary(const EmbeddingSet& set, const std::filesystem::path& path);
std::string encode_binary(const EmbeddingSet& set);

/// Dispatches on the leading magic bytes: MPER -> binary, otherwise CSV.
EmbeddingSet load_embeddings(const std::filesystem::path& path);

/// Median with the average-of-two-middles convention for even length.
double median(std::vector<double> values);

/// 1 where value >= median, else 0.
std::vector<int> median_binarize(const std::vector<double>& values);

/// Uniform sample without replacement of `targets` counts from every
/// (dist, split) cell. Selected rows keep their original relative order.
EmbeddingSet subsample_split(const EmbeddingSet& set, const SplitManifest& targets, Rng& rng);

// Small file helpers shared by the CLI and checkpoints.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace molepair
