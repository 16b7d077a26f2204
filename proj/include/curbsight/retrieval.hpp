#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "curbsight/clients.hpp"
#include "curbsight/schema.hpp"

namespace curbsight::retrieval {

enum class Modality { Text, Visual };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s); // throws Error

struct StoreEntry {
    std::string id;
    std::vector<double> embedding;
    nlohmann::json payload;
    // text payloads: {source_doc, locator, chunk_index, body}
    // visual payloads: {image_ref, category, attributes{...}}
};

struct RetrievalHit {
    std::string id;
    double score = 0.0; // cosine, in [-1, 1]
    nlohmann::json payload;
};

// Flat in-memory vector store with exact exhaustive cosine ranking.
// Queries are const and safe to run concurrently; any mutation (add,
// remove, load) needs exclusive access.
class VectorStore {
  public:
    VectorStore(Modality modality, std::size_t dim);

    Modality modality() const { return modality_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<StoreEntry>& entries() const { return entries_; }

    void add(StoreEntry entry); // throws on duplicate id / dim mismatch
    std::size_t remove_where(const std::function<bool(const StoreEntry&)>& pred);

    // visual stores: does any exemplar carry this canonical category?
    bool has_category(const std::string& category) const;

    // Top-k by (cosine desc, id asc). k is clamped to the candidate count.
    // category_filter restricts ranking to entries whose payload.category
    // matches exactly; an unknown filter category is an error.
    std::vector<RetrievalHit> query(std::span<const double> query_embedding, std::size_t k,
                                    const std::optional<std::string>& category_filter =
                                        std::nullopt) const;

    // One-line JSON header (format/version/modality/dim/count), then one
    // JSON entry per line. load() rejects wrong magic, unknown versions,
    // and truncated files.
    void save(const std::filesystem::path& path) const;
    static VectorStore load(const std::filesystem::path& path);

    std::string serialize() const;
    std::uint64_t content_hash() const; // FNV-1a over serialize()

  private:
    Modality modality_;
    std::size_t dim_;
    std::vector<StoreEntry> entries_;
    std::unordered_set<std::string> ids_;
};

// Modality-checked fronts for the two retrieval paths.
std::vector<RetrievalHit> query_text(const VectorStore& store,
                                     std::span<const double> query_embedding, std::size_t k);
std::vector<RetrievalHit> query_visual(const VectorStore& store,
                                       std::span<const double> query_embedding, std::size_t m,
                                       const std::optional<std::string>& category_filter);

// --- document chunking ------------------------------------------------------

struct TextSpan {
    std::size_t begin = 0;
    std::size_t end = 0; // half-open
};

// Split into windows of at most max_chars. Split points prefer a paragraph
// break, then a sentence end, then a hard cut, searched in the second half
// of the window; consecutive spans overlap by overlap_chars (the tail span
// may overlap more). Empty input is an error.
std::vector<TextSpan> chunk_document(const std::string& body, std::size_t max_chars = 512,
                                     std::size_t overlap_chars = 64);

struct IngestReport {
    std::size_t documents = 0;
    std::size_t items = 0;                   // chunks or exemplars ingested
    std::vector<std::string> skipped;        // per-item skip diagnostics
};

// Chunk, embed, and store each document; re-ingesting a document replaces
// its chunks (keyed by file basename). Chunk ids are "<basename>#<index>".
IngestReport ingest_documents(const std::vector<std::filesystem::path>& paths,
                              clients::TextEmbedder& embedder, VectorStore& store,
                              std::size_t max_chars = 512, std::size_t overlap_chars = 64);

// Index one exemplar per annotated object of a COCO-style file (bbox is
// [x, y, w, h]; a per-annotation `attributes` object rides along verbatim).
// Embeddings are computed on the padded crop. Items with an unknown
// category or a missing image are skipped and reported; exemplar ids are
// "<image stem>#<annotation id>".
IngestReport index_exemplars(const std::filesystem::path& annotations_file,
                             const std::filesystem::path& images_root,
                             clients::ImageEmbedder& embedder, VectorStore& store,
                             const schema::AttributeSchema& schema, double pad = 0.10);

} // namespace curbsight::retrieval
