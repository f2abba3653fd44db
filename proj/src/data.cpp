#include "molepair/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace molepair {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'M', 'P', 'E', 'R'};
constexpr std::size_t kHeaderBytes = 16;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        return std::nullopt;
    }
    return value;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    return v;
}

}  // namespace

std::string_view to_string(DistTag tag) { return tag == DistTag::kId ? "ID" : "OOD"; }

std::string_view to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::kTrain: return "train";
        case SplitTag::kVal: return "val";
        case SplitTag::kTest: return "test";
    }
    return "?";
}

DistTag parse_dist_tag(std::string_view text) {
    if (text == "ID") return DistTag::kId;
    if (text == "OOD") return DistTag::kOod;
    throw SchemaError("unknown dist tag '" + std::string(text) + "' (expected ID or OOD)");
}

SplitTag parse_split_tag(std::string_view text) {
    if (text == "train") return SplitTag::kTrain;
    if (text == "val") return SplitTag::kVal;
    if (text == "test") return SplitTag::kTest;
    throw SchemaError("unknown split tag '" + std::string(text) + "' (expected train, val or test)");
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<RecordMeta> records, Matrix embeddings)
    : dim_(dim), records_(std::move(records)), embeddings_(std::move(embeddings)) {
    if (dim_ == 0) {
        throw SchemaError("embedding dim must be positive");
    }
    if (embeddings_.rows() != records_.size() || embeddings_.cols() != dim_) {
        throw SchemaError("embedding matrix is " + std::to_string(embeddings_.rows()) + "x" +
                          std::to_string(embeddings_.cols()) + ", expected " +
                          std::to_string(records_.size()) + "x" + std::to_string(dim_));
    }
    if (!embeddings_.all_finite()) {
        throw SchemaError("embedding contains a non-finite entry");
    }
    std::unordered_set<std::string> seen;
    seen.reserve(records_.size());
    for (const auto& r : records_) {
        if (!seen.insert(r.id).second) {
            throw SchemaError("duplicate id '" + r.id + "'");
        }
        if (r.label && !std::isfinite(*r.label)) {
            throw SchemaError("non-finite label for id '" + r.id + "'");
        }
    }
}

std::vector<std::size_t> EmbeddingSet::indices(DistTag dist, SplitTag split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].dist == dist && records_[i].split == split) {
            out.push_back(i);
        }
    }
    return out;
}

std::size_t EmbeddingSet::count(DistTag dist, SplitTag split) const {
    return static_cast<std::size_t>(std::count_if(
        records_.begin(), records_.end(),
        [&](const RecordMeta& r) { return r.dist == dist && r.split == split; }));
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::size_t>& rows) const {
    std::vector<RecordMeta> recs;
    recs.reserve(rows.size());
    for (std::size_t r : rows) {
        recs.push_back(records_.at(r));
    }
    return EmbeddingSet(dim_, std::move(recs), embeddings_.gather_rows(rows));
}

void EmbeddingSet::require_both_tags(SplitTag split, std::string_view purpose) const {
    for (DistTag d : kAllDists) {
        if (count(d, split) == 0) {
            throw CapacityError(std::string(purpose) + ": split '" + std::string(to_string(split)) +
                                "' has no " + std::string(to_string(d)) + " records");
        }
    }
}

// ---------------------------------------------------------------------------

SplitManifest SplitManifest::from_set(const EmbeddingSet& set, std::uint64_t seed,
                                      std::vector<std::string> sources) {
    SplitManifest m;
    m.seed = seed;
    m.source_files = std::move(sources);
    for (const auto& r : set.records()) {
        ++m.at(r.dist, r.split);
    }
    return m;
}

void SplitManifest::validate_against(const EmbeddingSet& set) const {
    const SplitManifest actual = from_set(set);
    for (DistTag d : kAllDists) {
        for (SplitTag s : kAllSplits) {
            if (actual.at(d, s) != at(d, s)) {
                throw SchemaError("manifest count for (" + std::string(to_string(d)) + ", " +
                                  std::string(to_string(s)) + ") is " + std::to_string(at(d, s)) +
                                  " but the set holds " + std::to_string(actual.at(d, s)));
            }
        }
    }
}

std::string SplitManifest::to_json() const {
    json counts_json = json::object();
    for (SplitTag s : kAllSplits) {
        json cell = json::object();
        for (DistTag d : kAllDists) {
            cell[std::string(to_string(d))] = at(d, s);
        }
        counts_json[std::string(to_string(s))] = cell;
    }
    json j = {{"counts", counts_json}, {"seed", seed}, {"source_files", source_files}};
    return j.dump(2) + "\n";
}

SplitManifest SplitManifest::from_json(std::string_view text) {
    SplitManifest m;
    try {
        const json j = json::parse(text);
        m.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("source_files")) {
            m.source_files = j.at("source_files").get<std::vector<std::string>>();
        }
        const json& counts = j.at("counts");
        for (SplitTag s : kAllSplits) {
            const std::string sk(to_string(s));
            if (!counts.contains(sk)) continue;
            for (DistTag d : kAllDists) {
                m.at(d, s) = counts.at(sk).value(std::string(to_string(d)), std::size_t{0});
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("split manifest: ") + e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------

EmbeddingSet parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = end + 1;
        }
    }
    if (lines.empty()) {
        throw ParseError(1, "missing header row");
    }

    const auto header = split_fields(lines[0]);
    static constexpr std::array<std::string_view, 4> kFixed = {"id", "dist", "split", "label"};
    if (header.size() < kFixed.size() + 1) {
        throw SchemaError("CSV header needs id,dist,split,label and at least one e<k> column");
    }
    for (std::size_t i = 0; i < kFixed.size(); ++i) {
        if (header[i] != kFixed[i]) {
            throw SchemaError("CSV header column " + std::to_string(i) + " must be '" +
                              std::string(kFixed[i]) + "', got '" + std::string(header[i]) + "'");
        }
    }
    const std::size_t dim = header.size() - kFixed.size();
    for (std::size_t k = 0; k < dim; ++k) {
        if (header[kFixed.size() + k] != "e" + std::to_string(k)) {
            throw SchemaError("CSV header column " + std::to_string(kFixed.size() + k) +
                              " must be 'e" + std::to_string(k) + "'");
        }
    }

    std::vector<RecordMeta> records;
    std::vector<double> values;
    std::unordered_set<std::string> seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        if (lines[li].empty()) continue;
        const auto fields = split_fields(lines[li]);
        if (fields.size() != header.size()) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields (dim " +
                              std::to_string(dim) + "), got " + std::to_string(fields.size()));
        }
        RecordMeta rec;
        rec.id = std::string(fields[0]);
        if (rec.id.empty()) {
            throw ParseError(line_no, "empty id");
        }
        try {
            rec.dist = parse_dist_tag(fields[1]);
            rec.split = parse_split_tag(fields[2]);
        } catch (const SchemaError& e) {
            throw ParseError(line_no, e.what());
        }
        if (!fields[3].empty()) {
            const auto label = parse_double(fields[3]);
            if (!label || !std::isfinite(*label)) {
                throw ParseError(line_no, "malformed label '" + std::string(fields[3]) + "'");
            }
            rec.label = *label;
        }
        for (std::size_t k = 0; k < dim; ++k) {
            const auto v = parse_double(fields[kFixed.size() + k]);
            if (!v || !std::isfinite(*v)) {
                throw ParseError(line_no, "malformed or non-finite value in column e" +
                                              std::to_string(k));
            }
            values.push_back(*v);
        }
        if (!seen.insert(rec.id).second) {
            throw SchemaError("line " + std::to_string(line_no) + ": duplicate id '" + rec.id + "'");
        }
        records.push_back(std::move(rec));
    }
    const std::size_t n = records.size();
    return EmbeddingSet(dim, std::move(records), Matrix(n, dim, std::move(values)));
}

EmbeddingSet load_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

void save_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
    std::string out = "id,dist,split,label";
    for (std::size_t k = 0; k < set.dim(); ++k) {
        out += ",e" + std::to_string(k);
    }
    out += '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& r = set.records()[i];
        out += r.id;
        out += ',';
        out += to_string(r.dist);
        out += ',';
        out += to_string(r.split);
        out += ',';
        if (r.label) out += format_double(*r.label);
        for (double v : set.embeddings().row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_file(path, out);
}

// ---------------------------------------------------------------------------

std::string encode_binary(const EmbeddingSet& set) {
    if (set.size() > UINT32_MAX || set.dim() > UINT32_MAX) {
        throw InvalidParameter("embedding set too large for the MPER format");
    }
    std::string out(kMagic, 4);
    put_u32(out, kBinaryVersion);
    put_u32(out, static_cast<std::uint32_t>(set.size()));
    put_u32(out, static_cast<std::uint32_t>(set.dim()));
    out.reserve(kHeaderBytes + set.size() * set.dim() * 4);
    for (double v : set.embeddings().data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    json ids = json::array();
    json dist = json::array();
    json split = json::array();
    json labels = json::array();
    for (const auto& r : set.records()) {
        ids.push_back(r.id);
        dist.push_back(to_string(r.dist));
        split.push_back(to_string(r.split));
        labels.push_back(r.label ? json(*r.label) : json(nullptr));
    }
    const json trailer = {{"ids", ids}, {"dist", dist}, {"split", split}, {"labels", labels}};
    out += trailer.dump();
    return out;
}

void save_binary(const EmbeddingSet& set, const std::filesystem::path& path) {
    write_file(path, encode_binary(set));
}

EmbeddingSet decode_binary(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic: not an MPER embedding file");
    }
    if (bytes.size() < kHeaderBytes) {
        throw IoError("truncated MPER header");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kBinaryVersion) {
        throw FormatError("unsupported MPER version " + std::to_string(version));
    }
    const std::uint32_t n = get_u32(bytes, 8);
    const std::uint32_t dim = get_u32(bytes, 12);
    if (n == 0) {
        throw EmptySetError("MPER file holds no records");
    }
    if (dim == 0) {
        throw SchemaError("MPER file declares dim 0");
    }
    const std::size_t payload = static_cast<std::size_t>(n) * dim * 4;
    if (bytes.size() < kHeaderBytes + payload) {
        throw IoError("truncated MPER payload: expected " + std::to_string(payload) +
                      " bytes of float32 data");
    }
    std::vector<double> values(static_cast<std::size_t>(n) * dim);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<double>(
            std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i)));
    }

    std::vector<RecordMeta> records(n);
    try {
        const json trailer = json::parse(bytes.substr(kHeaderBytes + payload));
        const auto& ids = trailer.at("ids");
        const auto& dist = trailer.at("dist");
        const auto& split = trailer.at("split");
        const auto& labels = trailer.at("labels");
        if (ids.size() != n || dist.size() != n || split.size() != n || labels.size() != n) {
            throw SchemaError("MPER trailer arrays do not match n=" + std::to_string(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            records[i].id = ids[i].get<std::string>();
            records[i].dist = parse_dist_tag(dist[i].get<std::string>());
            records[i].split = parse_split_tag(split[i].get<std::string>());
            if (!labels[i].is_null()) {
                records[i].label = labels[i].get<double>();
            }
        }
    } catch (const json::parse_error& e) {
        throw IoError(std::string("MPER trailer is truncated or malformed: ") + e.what());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("MPER trailer: ") + e.what());
    }
    return EmbeddingSet(dim, std::move(records), Matrix(n, dim, std::move(values)));
}

EmbeddingSet load_binary(const std::filesystem::path& path) {
    return decode_binary(read_file(path));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) {
        return decode_binary(bytes);
    }
    return parse_csv(bytes);
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
    if (values.empty()) {
        throw InvalidParameter("median of an empty vector");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<int> median_binarize(const std::vector<double>& values) {
    if (values.empty()) {
        throw InvalidParameter("median_binarize: empty input");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw InvalidParameter("median_binarize: non-finite value");
        }
    }
    const double m = median(values);
    std::vector<int> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(),
                   [m](double v) { return v >= m ? 1 : 0; });
    return out;
}

EmbeddingSet subsample_split(const EmbeddingSet& set, const SplitManifest& targets, Rng& rng) {
    std::vector<std::size_t> chosen;
    for (DistTag d : kAllDists) {
        for (SplitTag s : kAllSplits) {
            std::vector<std::size_t> cell = set.indices(d, s);
            const std::size_t want = targets.at(d, s);
            if (want > cell.size()) {
                throw CapacityError("cell (" + std::string(to_string(d)) + ", " +
                                    std::string(to_string(s)) + ") has " +
                                    std::to_string(cell.size()) + " records, " +
                                    std::to_string(want) + " requested");
            }
            // Partial Fisher-Yates: the first `want` slots become the sample.
            for (std::size_t i = 0; i < want; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(cell.size() - i));
                std::swap(cell[i], cell[j]);
            }
            chosen.insert(chosen.end(), cell.begin(), cell.begin() + static_cast<long>(want));
        }
    }
    std::sort(chosen.begin(), chosen.end());
    if (chosen.empty()) {
        return EmbeddingSet(set.dim(), {}, Matrix(0, set.dim()));
    }
    return set.subset(chosen);
}

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

}  // namespace molepair
