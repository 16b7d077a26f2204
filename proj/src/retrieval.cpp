#include "curbsight/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "curbsight/error.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/hash.hpp"
#include "curbsight/numerics.hpp"

namespace curbsight::retrieval {

std::string to_string(Modality m) { return m == Modality::Text ? "text" : "visual"; }

Modality modality_from_string(const std::string& s) {
    if (s == "text") return Modality::Text;
    if (s == "visual") return Modality::Visual;
    throw Error("unknown store modality: '" + s + "'");
}

VectorStore::VectorStore(Modality modality, std::size_t dim) : modality_(modality), dim_(dim) {
    if (dim_ == 0) throw Error("store dimension must be positive");
}

void VectorStore::add(StoreEntry entry) {
    if (entry.id.empty()) throw Error("store entry needs a nonempty id");
    if (entry.embedding.size() != dim_) {
        throw Error("store entry '" + entry.id + "': embedding dim " +
                    std::to_string(entry.embedding.size()) + " != store dim " +
                    std::to_string(dim_));
    }
    if (!ids_.insert(entry.id).second) {
        throw Error("duplicate store id: '" + entry.id + "'");
    }
    entries_.push_back(std::move(entry));
}

std::size_t VectorStore::remove_where(const std::function<bool(const StoreEntry&)>& pred) {
    const auto it = std::remove_if(entries_.begin(), entries_.end(), pred);
    const auto n = static_cast<std::size_t>(entries_.end() - it);
    entries_.erase(it, entries_.end());
    if (n > 0) {
        ids_.clear();
        for (const auto& e : entries_) ids_.insert(e.id);
    }
    return n;
}

bool VectorStore::has_category(const std::string& category) const {
    for (const auto& e : entries_) {
        if (e.payload.value("category", std::string()) == category) return true;
    }
    return false;
}

std::vector<RetrievalHit> VectorStore::query(
    std::span<const double> query_embedding, std::size_t k,
    const std::optional<std::string>& category_filter) const {
    if (query_embedding.size() != dim_) {
        throw Error("query dim " + std::to_string(query_embedding.size()) + " != store dim " +
                    std::to_string(dim_));
    }
    if (k == 0) throw Error("k must be >= 1");

    std::vector<const StoreEntry*> pool;
    pool.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (category_filter &&
            e.payload.value("category", std::string()) != *category_filter) {
            continue;
        }
        pool.push_back(&e);
    }
    if (category_filter && pool.empty() && !entries_.empty()) {
        throw Error("no exemplars for filter category '" + *category_filter + "'");
    }

    struct Scored {
        double score;
        const StoreEntry* entry;
    };
    std::vector<Scored> scored;
    scored.reserve(pool.size());
    for (const StoreEntry* e : pool) {
        scored.push_back({numerics::cosine_similarity(e->embedding, query_embedding), e});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry->id < b.entry->id;
    });
    if (scored.size() > k) scored.resize(k);

    std::vector<RetrievalHit> hits;
    hits.reserve(scored.size());
    for (const auto& s : scored) {
        hits.push_back({s.entry->id, s.score, s.entry->payload});
    }
    return hits;
}

std::string VectorStore::serialize() const {
    std::ostringstream out;
    out << nlohmann::json{{"format", "curbsight-store"},
                          {"version", 1},
                          {"modality", to_string(modality_)},
                          {"dim", dim_},
                          {"count", entries_.size()}}
               .dump()
        << "\n";
    for (const auto& e : entries_) {
        out << nlohmann::json{{"id", e.id}, {"embedding", e.embedding}, {"payload", e.payload}}
                   .dump()
            << "\n";
    }
    return out.str();
}

std::uint64_t VectorStore::content_hash() const { return fnv1a64(serialize()); }

void VectorStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write store file: " + path.string());
    out << serialize();
    if (!out) throw Error("short write to store file: " + path.string());
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read store file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error("corrupt store (empty file): " + path.string());
    const nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", std::string()) != "curbsight-store") {
        throw Error("corrupt store (bad header): " + path.string());
    }
    if (header.value("version", 0) != 1) {
        throw Error("unsupported store version " + std::to_string(header.value("version", 0)) +
                    ": " + path.string());
    }
    VectorStore store(modality_from_string(header.at("modality").get<std::string>()),
                      header.at("dim").get<std::size_t>());
    const auto count = header.at("count").get<std::size_t>();

    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line) || line.empty()) {
            throw Error("corrupt store (truncated at entry " + std::to_string(i) + "): " +
                        path.string());
        }
        const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("embedding")) {
            throw Error("corrupt store (bad entry " + std::to_string(i) + "): " +
                        path.string());
        }
        StoreEntry e;
        e.id = j["id"].get<std::string>();
        e.embedding = j["embedding"].get<std::vector<double>>();
        e.payload = j.value("payload", nlohmann::json::object());
        if (e.embedding.size() != store.dim_ || !store.ids_.insert(e.id).second) {
            throw Error("corrupt store (entry " + std::to_string(i) +
                        " dim/id conflict): " + path.string());
        }
        store.entries_.push_back(std::move(e));
    }
    return store;
}

std::vector<RetrievalHit> query_text(const VectorStore& store,
                                     std::span<const double> query_embedding, std::size_t k) {
    if (store.modality() != Modality::Text) {
        throw Error("query_text needs a text store");
    }
    return store.query(query_embedding, k);
}

std::vector<RetrievalHit> query_visual(const VectorStore& store,
                                       std::span<const double> query_embedding, std::size_t m,
                                       const std::optional<std::string>& category_filter) {
    if (store.modality() != Modality::Visual) {
        throw Error("query_visual needs a visual store");
    }
    return store.query(query_embedding, m, category_filter);
}

// --- chunking ----------------------------------------------------------------

namespace {

// best split position in (mid, limit]: after a paragraph break if any,
// otherwise after a sentence end, otherwise `limit` (hard cut)
std::size_t pick_split(const std::string& text, std::size_t mid, std::size_t limit) {
    const auto last_end_of = [&](const std::string& needle) -> std::size_t {
        // end offset of the last occurrence fully inside [0, limit)
        const std::size_t from = limit >= needle.size() ? limit - needle.size() : 0;
        const std::size_t pos = text.rfind(needle, from);
        if (pos == std::string::npos) return 0;
        return pos + needle.size();
    };

    if (const std::size_t cut = last_end_of("\n\n"); cut > mid) return cut;

    std::size_t best = 0;
    for (const char* mark : {". ", "! ", "? ", ".\n", "!\n", "?\n"}) {
        best = std::max(best, last_end_of(mark));
    }
    if (best > mid) return best;
    return limit;
}

} // namespace

std::vector<TextSpan> chunk_document(const std::string& body, std::size_t max_chars,
                                     std::size_t overlap_chars) {
    if (body.empty()) throw Error("cannot chunk an empty document");
    if (max_chars <= overlap_chars) throw Error("max_chars must exceed overlap_chars");

    std::vector<TextSpan> spans;
    std::size_t start = 0;
    while (start < body.size()) {
        const std::size_t remaining = body.size() - start;
        if (remaining <= max_chars) {
            spans.push_back({start, body.size()});
            break;
        }
        const std::size_t limit = start + max_chars;
        const std::size_t end = pick_split(body, start + max_chars / 2, limit);
        spans.push_back({start, end});
        start = std::max(end - overlap_chars, start + 1);
    }
    return spans;
}

// --- ingestion -----------------------------------------------------------------

namespace {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read document: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(std::string(what) + " not readable: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error(std::string(what) + " is not valid JSON: " + path.string());
    }
    return j;
}

} // namespace

IngestReport ingest_documents(const std::vector<std::filesystem::path>& paths,
                              clients::TextEmbedder& embedder, VectorStore& store,
                              std::size_t max_chars, std::size_t overlap_chars) {
    if (store.modality() != Modality::Text) throw Error("ingest_documents needs a text store");
    if (embedder.dim() != store.dim()) {
        throw Error("embedder dim " + std::to_string(embedder.dim()) + " != store dim " +
                    std::to_string(store.dim()));
    }

    IngestReport report;
    for (const auto& path : paths) {
        const std::string body = read_text_file(path);
        const std::string doc = path.filename().string();
        const auto spans = chunk_document(body, max_chars, overlap_chars);

        // replace any previous ingest of this document
        store.remove_where([&](const StoreEntry& e) {
            return e.payload.value("source_doc", std::string()) == doc;
        });

        for (std::size_t i = 0; i < spans.size(); ++i) {
            const std::string text = body.substr(spans[i].begin, spans[i].end - spans[i].begin);
            StoreEntry entry;
            entry.id = doc + "#" + std::to_string(i);
            entry.embedding = embedder.embed_text(text);
            entry.payload = {{"source_doc", doc},
                             {"chunk_index", i},
                             {"locator", doc + " chars " + std::to_string(spans[i].begin) +
                                             "-" + std::to_string(spans[i].end)},
                             {"body", text}};
            store.add(std::move(entry));
        }
        ++report.documents;
        report.items += spans.size();
    }
    return report;
}

IngestReport index_exemplars(const std::filesystem::path& annotations_file,
                             const std::filesystem::path& images_root,
                             clients::ImageEmbedder& embedder, VectorStore& store,
                             const schema::AttributeSchema& schema, double pad) {
    if (store.modality() != Modality::Visual) {
        throw Error("index_exemplars needs a visual store");
    }
    if (embedder.dim() != store.dim()) {
        throw Error("embedder dim " + std::to_string(embedder.dim()) + " != store dim " +
                    std::to_string(store.dim()));
    }

    const nlohmann::json coco = read_json_file(annotations_file, "exemplar annotations");
    std::map<std::int64_t, std::string> image_files;
    for (const auto& img : coco.value("images", nlohmann::json::array())) {
        image_files[img.at("id").get<std::int64_t>()] = img.at("file_name").get<std::string>();
    }
    std::map<std::int64_t, std::string> category_names;
    for (const auto& cat : coco.value("categories", nlohmann::json::array())) {
        category_names[cat.at("id").get<std::int64_t>()] = cat.at("name").get<std::string>();
    }

    IngestReport report;
    std::map<std::string, cv::Mat> image_cache;
    for (const auto& ann : coco.value("annotations", nlohmann::json::array())) {
        const auto ann_id = ann.at("id").get<std::int64_t>();
        const auto skip = [&](const std::string& why) {
            report.skipped.push_back("annotation " + std::to_string(ann_id) + ": " + why);
        };

        const auto cat_it = category_names.find(ann.at("category_id").get<std::int64_t>());
        if (cat_it == category_names.end()) {
            skip("category_id not in the file's category table");
            continue;
        }
        const schema::CategoryDef* cat = schema.find_category(cat_it->second);
        if (cat == nullptr) {
            skip("category '" + cat_it->second + "' not in schema");
            continue;
        }
        const auto img_it = image_files.find(ann.at("image_id").get<std::int64_t>());
        if (img_it == image_files.end()) {
            skip("image_id not in the file's image table");
            continue;
        }
        const auto image_path = images_root / img_it->second;
        cv::Mat image;
        if (const auto cached = image_cache.find(img_it->second); cached != image_cache.end()) {
            image = cached->second;
        } else {
            image = cv::imread(image_path.string(), cv::IMREAD_COLOR);
            if (!image.empty()) image_cache[img_it->second] = image;
        }
        if (image.empty()) {
            skip("image not readable: " + image_path.string());
            continue;
        }

        const auto& b = ann.at("bbox"); // COCO order: x, y, w, h
        const geometry::BoundingBox box{b[0].get<double>(), b[1].get<double>(),
                                        b[0].get<double>() + b[2].get<double>(),
                                        b[1].get<double>() + b[3].get<double>()};
        cv::Mat cropped;
        try {
            cropped = geometry::crop(image, box, pad);
        } catch (const Error& e) {
            skip(e.what());
            continue;
        }

        StoreEntry entry;
        entry.id = image_path.stem().string() + "#" + std::to_string(ann_id);
        entry.embedding = embedder.embed_image(cropped);
        entry.payload = {{"image_ref", img_it->second},
                         {"category", cat->name},
                         {"attributes", ann.value("attributes", nlohmann::json::object())},
                         {"bbox", ann.at("bbox")}};
        store.add(std::move(entry));
        ++report.items;
    }
    return report;
}

} // namespace curbsight::retrieval
