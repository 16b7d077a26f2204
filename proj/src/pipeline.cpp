#include "curbsight/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <map>
#include <thread>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>

#include "curbsight/error.hpp"
#include "curbsight/hash.hpp"
#include "curbsight/version.hpp"

namespace curbsight::pipeline {

namespace {

constexpr const char* kDefaultSystemTemplate =
    "You are an expert municipal street-furniture surveyor. The first image is a cropped "
    "object from a street-level panorama; the second shows its surrounding scene. Identify "
    "the object's attributes exactly as requested.";

constexpr const char* kDefaultObjectTemplate =
    "Category: {category}\n"
    "Report every attribute listed below. Answer \"unknown\" when the image does not "
    "show it.";

std::string format_score(double s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", s);
    return buf;
}

} // namespace

PipelineConfig default_pipeline_config() {
    PipelineConfig cfg;
    cfg.system_template = kDefaultSystemTemplate;
    cfg.object_template = kDefaultObjectTemplate;
    return cfg;
}

void check_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.views.empty()) throw ConfigError("pipeline.views must not be empty");
    std::unordered_set<std::string> ids;
    for (const auto& v : cfg.views) {
        if (v.view_id.empty()) throw ConfigError("every view needs a view_id");
        if (!ids.insert(v.view_id).second) {
            throw ConfigError("duplicate view_id '" + v.view_id + "'");
        }
        if (!(v.fov_deg > 0.0 && v.fov_deg < 180.0)) {
            throw ConfigError("view '" + v.view_id + "': fov must lie in (0, 180)");
        }
        if (v.width <= 0 || v.height <= 0) {
            throw ConfigError("view '" + v.view_id + "': width/height must be positive");
        }
    }
    if (cfg.conf_threshold < 0.0 || cfg.conf_threshold > 1.0) {
        throw ConfigError("pipeline.conf_threshold must lie in [0, 1]");
    }
    if (cfg.dedup_iou <= 0.0 || cfg.dedup_iou > 1.0) {
        throw ConfigError("pipeline.dedup_iou must lie in (0, 1]");
    }
    if (cfg.pad_fraction < 0.0) throw ConfigError("pipeline.pad_fraction must be >= 0");
    const std::size_t template_len =
        cfg.system_template.size() + cfg.object_template.size();
    if (cfg.context_char_budget <= template_len) {
        throw ConfigError("pipeline.context_char_budget must exceed the prompt templates");
    }
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : cfg.views) {
        views.push_back({{"view_id", v.view_id},
                         {"yaw_deg", v.yaw_deg},
                         {"pitch_deg", v.pitch_deg},
                         {"fov_deg", v.fov_deg},
                         {"width", v.width},
                         {"height", v.height}});
    }
    return {{"views", std::move(views)},
            {"conf_threshold", cfg.conf_threshold},
            {"dedup_iou", cfg.dedup_iou},
            {"pad_fraction", cfg.pad_fraction},
            {"k", cfg.k},
            {"m", cfg.m},
            {"context_char_budget", cfg.context_char_budget},
            {"category_filter_on_visual", cfg.category_filter_on_visual},
            {"attach_panorama", cfg.attach_panorama},
            {"system_template", cfg.system_template},
            {"object_template", cfg.object_template}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg = default_pipeline_config();
    try {
        if (j.contains("views")) {
            cfg.views.clear();
            for (const auto& vj : j["views"]) {
                geometry::PerspectiveView v;
                v.view_id = vj.at("view_id").get<std::string>();
                v.yaw_deg = vj.value("yaw_deg", 0.0);
                v.pitch_deg = vj.value("pitch_deg", 0.0);
                v.fov_deg = vj.value("fov_deg", 90.0);
                v.width = vj.at("width").get<int>();
                v.height = vj.at("height").get<int>();
                cfg.views.push_back(std::move(v));
            }
        }
        cfg.conf_threshold = j.value("conf_threshold", cfg.conf_threshold);
        cfg.dedup_iou = j.value("dedup_iou", cfg.dedup_iou);
        cfg.pad_fraction = j.value("pad_fraction", cfg.pad_fraction);
        cfg.k = j.value("k", cfg.k);
        cfg.m = j.value("m", cfg.m);
        cfg.context_char_budget = j.value("context_char_budget", cfg.context_char_budget);
        cfg.category_filter_on_visual =
            j.value("category_filter_on_visual", cfg.category_filter_on_visual);
        cfg.attach_panorama = j.value("attach_panorama", cfg.attach_panorama);
        cfg.system_template = j.value("system_template", cfg.system_template);
        cfg.object_template = j.value("object_template", cfg.object_template);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    check_pipeline_config(cfg);
    return cfg;
}

std::uint64_t pipeline_config_hash(const PipelineConfig& cfg) {
    return fnv1a64(pipeline_config_to_json(cfg).dump());
}

// --- panorama-space dedup ----------------------------------------------------

double pano_iou(const geometry::BoundingBox& a, const geometry::BoundingBox& b, int pano_w) {
    const double y_overlap =
        std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    double x_overlap = 0.0;
    for (const int shift : {-1, 0, 1}) {
        const double off = static_cast<double>(shift) * pano_w;
        const double lo = std::max(a.x_min, b.x_min + off);
        const double hi = std::min(a.x_max, b.x_max + off);
        x_overlap = std::max(x_overlap, hi - lo);
    }
    const double inter = x_overlap * y_overlap;
    const double uni = a.area() + b.area() - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

std::vector<PanoDetection> dedup_detections(std::vector<PanoDetection> dets,
                                            double iou_threshold, int pano_w) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const PanoDetection& a, const PanoDetection& b) {
                         return a.confidence > b.confidence;
                     });
    std::vector<PanoDetection> kept;
    for (auto& d : dets) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.category != d.category) continue;
            if (pano_iou(k.pano_box, d.pano_box, pano_w) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(d));
    }
    return kept;
}

// --- context assembly ----------------------------------------------------------

namespace {

std::string schema_slice_text(const schema::CategoryDef& cat) {
    std::string out = "Attributes to annotate:\n";
    for (const auto& attr : cat.attributes) {
        out += "- " + attr.name + ": ";
        if (attr.kind == schema::AttributeKind::Enumerated) {
            out += "one of ";
            for (std::size_t i = 0; i < attr.allowed_values.size(); ++i) {
                if (i > 0) out += " | ";
                out += attr.allowed_values[i];
            }
            out += " (or \"unknown\")\n";
        } else {
            out += "free text (short phrase, or \"unknown\")\n";
        }
    }
    return out;
}

std::string text_section(const std::vector<retrieval::RetrievalHit>& hits) {
    if (hits.empty()) return {};
    std::string out = "Reference standards:\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out += "[" + std::to_string(i + 1) + "] (" +
               hits[i].payload.value("locator", hits[i].id) + ", score " +
               format_score(hits[i].score) + ") " +
               hits[i].payload.value("body", std::string()) + "\n";
    }
    return out;
}

std::string exemplar_section(const std::vector<retrieval::RetrievalHit>& hits) {
    if (hits.empty()) return {};
    std::string out = "Annotated precedents (visually similar objects):\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
        nlohmann::json payload = {{"category", hits[i].payload.value("category", std::string())},
                                  {"attributes", hits[i].payload.value(
                                                     "attributes", nlohmann::json::object())}};
        out += "- precedent " + std::to_string(i + 1) + " (similarity " +
               format_score(hits[i].score) + "): " + payload.dump() + "\n";
    }
    return out;
}

constexpr const char* kFormatContract =
    "Respond with a single JSON object of the form {\"category\": \"<name>\", "
    "\"attributes\": [{\"name\": \"<attribute>\", \"value\": \"<value>\", "
    "\"confidence\": <0..1>}]} and nothing else.";

constexpr const char* kTruncationNote = "[context truncated to fit the budget]\n";

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace

std::string assemble_context(const SceneContext& ctx, const PipelineConfig& cfg,
                             bool* truncated) {
    if (ctx.category_def == nullptr) {
        throw Error("assemble_context: no schema slice for category '" + ctx.category + "'");
    }
    const std::string head = cfg.system_template + "\n\n" +
                             replace_all(cfg.object_template, "{category}", ctx.category) +
                             "\n\n" + schema_slice_text(*ctx.category_def) + "\n";
    const std::string contract = kFormatContract;
    if (head.size() + contract.size() > cfg.context_char_budget) {
        throw Error("context budget " + std::to_string(cfg.context_char_budget) +
                    " cannot even fit the instruction and schema slice");
    }

    auto text_hits = ctx.text_hits;
    auto exemplar_hits = ctx.exemplar_hits;
    bool dropped = false;
    for (;;) {
        const std::string middle = text_section(text_hits) + exemplar_section(exemplar_hits);
        const std::string note = dropped ? kTruncationNote : "";
        if (head.size() + middle.size() + note.size() + contract.size() <=
            cfg.context_char_budget) {
            if (truncated != nullptr) *truncated = dropped;
            return head + middle + note + contract;
        }
        // over budget: shed the lowest-score text hit first, then exemplars
        if (!text_hits.empty()) {
            text_hits.pop_back();
        } else if (!exemplar_hits.empty()) {
            exemplar_hits.pop_back();
        } else {
            // nothing left to shed; head+contract fit, so the note must go
            if (truncated != nullptr) *truncated = true;
            return head + contract;
        }
        dropped = true;
    }
}

// --- scene orchestration ---------------------------------------------------------

namespace {

std::vector<std::string> detector_vocabulary(const schema::AttributeSchema& schema) {
    std::vector<std::string> vocab;
    vocab.reserve(schema.categories.size());
    for (const auto& cat : schema.categories) vocab.push_back(cat.name);
    return vocab;
}

std::string attribute_names_query(const schema::CategoryDef& cat) {
    std::string q = cat.name + ":";
    for (std::size_t i = 0; i < cat.attributes.size(); ++i) {
        q += (i == 0 ? " " : ", ") + cat.attributes[i].name;
    }
    return q;
}

schema::StructuredObjectRecord record_scaffold(const std::string& image_id, std::size_t index,
                                               const PanoDetection& det) {
    schema::StructuredObjectRecord rec;
    rec.object_id = image_id + "#" + std::to_string(index);
    rec.category = det.category;
    rec.bbox = det.pano_box;
    rec.source_image = image_id;
    rec.detector_confidence = det.confidence;
    rec.status = schema::RecordStatus::Invalid;
    return rec;
}

} // namespace

SceneResult run_scene(const geometry::EquirectImage& pano, const PipelineConfig& cfg,
                      const schema::AttributeSchema& schema, const StoreSet& stores,
                      const ClientSet& clients) {
    const auto t0 = std::chrono::steady_clock::now();
    SceneResult res;
    res.image_id = pano.image_id;

    if (clients.detector == nullptr || clients.vlm == nullptr) {
        throw ConfigError("run_scene needs at least a detector and a VLM client");
    }
    if (pano.pixels.empty()) {
        res.ok = false;
        res.error = "panorama has no pixels";
        return res;
    }

    const auto views = split_panorama(pano, cfg.views);
    const std::vector<std::string> vocab = detector_vocabulary(schema);

    std::map<std::string, const cv::Mat*> view_pixels;
    for (const auto& [id, mat] : views) view_pixels[id] = &mat;

    // detect per view; isolate per-view failures, fail only when no view works
    std::vector<PanoDetection> all;
    std::size_t failed_views = 0;
    std::string first_error;
    for (std::size_t vi = 0; vi < cfg.views.size(); ++vi) {
        const auto& view = cfg.views[vi];
        std::vector<clients::Detection> dets;
        try {
            dets = clients.detector->detect(
                {pano.image_id + "/" + view.view_id, views[vi].second}, vocab,
                cfg.conf_threshold);
        } catch (const std::exception& e) {
            ++failed_views;
            if (first_error.empty()) first_error = e.what();
            continue;
        }
        dets = clients::normalize_labels(dets, schema);
        for (const auto& d : dets) {
            const geometry::PanoBox pb =
                geometry::view_bbox_to_pano(view, d.bbox, pano.width(), pano.height());
            geometry::BoundingBox box = pb.box;
            if (pb.wraps_seam) box.x_max += pano.width(); // keep the interval ascending
            all.push_back({d.label, d.confidence, box, d.bbox, view.view_id});
        }
    }
    if (failed_views == cfg.views.size()) {
        res.ok = false;
        res.error = "detector failed on every view: " + first_error;
        return res;
    }

    res.stats.detections = all.size();
    const auto kept = dedup_detections(std::move(all), cfg.dedup_iou, pano.width());
    res.stats.dedup_dropped = res.stats.detections - kept.size();

    for (std::size_t i = 0; i < kept.size(); ++i) {
        const PanoDetection& det = kept[i];
        schema::StructuredObjectRecord rec = record_scaffold(pano.image_id, i, det);
        try {
            const cv::Mat& view_img = *view_pixels.at(det.view_id);
            const cv::Mat cropped = geometry::crop(view_img, det.view_box, cfg.pad_fraction);

            SceneContext ctx;
            ctx.crop_id = rec.object_id;
            ctx.category = det.category;
            ctx.category_def = schema.find_category(det.category);

            if (stores.visual != nullptr && cfg.m > 0) {
                if (clients.image_embedder == nullptr) {
                    throw ConfigError("visual retrieval needs an image embedder");
                }
                const auto emb = clients.image_embedder->embed_image(cropped);
                std::optional<std::string> filter;
                if (cfg.category_filter_on_visual &&
                    stores.visual->has_category(det.category)) {
                    filter = det.category;
                }
                ctx.exemplar_hits = retrieval::query_visual(*stores.visual, emb, cfg.m, filter);
            }
            if (stores.text != nullptr && cfg.k > 0) {
                if (clients.text_embedder == nullptr) {
                    throw ConfigError("text retrieval needs a text embedder");
                }
                const auto emb =
                    clients.text_embedder->embed_text(attribute_names_query(*ctx.category_def));
                ctx.text_hits = retrieval::query_text(*stores.text, emb, cfg.k);
            }

            const std::string prompt = assemble_context(ctx, cfg);

            std::vector<clients::ImageRef> images;
            images.push_back({rec.object_id, cropped});
            if (cfg.attach_panorama) {
                images.push_back({pano.image_id, pano.pixels});
            } else {
                images.push_back({pano.image_id + "/" + det.view_id, view_img});
            }
            const std::string raw = clients.vlm->complete(images, prompt);

            schema::StructuredObjectRecord extracted =
                schema::extract_and_repair(raw, schema, det.category);
            rec.category = extracted.category;
            rec.attributes = std::move(extracted.attributes);
            rec.status = extracted.status;
            if (!schema::validate_record(rec, schema).valid) {
                rec.status = schema::RecordStatus::Invalid; // defensive; repair should prevent this
            }
        } catch (const std::exception&) {
            rec.status = schema::RecordStatus::Invalid; // failure isolation: bad object, not bad scene
        }
        if (rec.status == schema::RecordStatus::Invalid) {
            ++res.stats.invalids;
        } else if (rec.status == schema::RecordStatus::RepairApplied) {
            ++res.stats.repairs;
        }
        res.records.push_back(std::move(rec));
    }

    res.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

nlohmann::json scene_stats_to_json(const SceneStats& stats) {
    return {{"detections", stats.detections},
            {"dedup_dropped", stats.dedup_dropped},
            {"repairs", stats.repairs},
            {"invalids", stats.invalids}};
}

BatchResult run_batch(const std::vector<BatchInput>& inputs, const PipelineConfig& cfg,
                      const schema::AttributeSchema& schema, const StoreSet& stores,
                      const ClientSet& clients, int jobs) {
    if (inputs.empty()) throw Error("run_batch: empty input list");
    check_pipeline_config(cfg);

    const std::size_t n = inputs.size();
    const std::size_t workers = std::min<std::size_t>(
        n, jobs > 0 ? static_cast<std::size_t>(jobs)
                    : std::max(1u, std::thread::hardware_concurrency()));

    BatchResult batch;
    batch.scenes.resize(n);
    std::atomic<std::size_t> next{0};

    const auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            SceneResult& out = batch.scenes[i];
            try {
                geometry::EquirectImage pano;
                pano.image_id = inputs[i].image_id;
                pano.pixels = cv::imread(inputs[i].path.string(), cv::IMREAD_COLOR);
                if (pano.pixels.empty()) {
                    out.image_id = inputs[i].image_id;
                    out.ok = false;
                    out.error = "unreadable image: " + inputs[i].path.string();
                    continue;
                }
                out = run_scene(pano, cfg, schema, stores, clients);
            } catch (const std::exception& e) {
                out.image_id = inputs[i].image_id;
                out.ok = false;
                out.error = e.what();
            }
        }
    };

    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::size_t failed = 0, records = 0, repairs = 0, invalids = 0;
    nlohmann::json images = nlohmann::json::array();
    for (const auto& scene : batch.scenes) {
        nlohmann::json entry = {{"id", scene.image_id},
                                {"status", scene.ok ? "ok" : "failed"},
                                {"records", scene.records.size()},
                                {"stats", scene_stats_to_json(scene.stats)}};
        if (!scene.ok) {
            entry["error"] = scene.error;
            ++failed;
        }
        records += scene.records.size();
        repairs += scene.stats.repairs;
        invalids += scene.stats.invalids;
        images.push_back(std::move(entry));
    }
    batch.all_ok = failed == 0;
    batch.fully_valid = batch.all_ok && invalids == 0;

    batch.manifest = {
        {"format", "curbsight-manifest"},
        {"version", 1},
        {"tool_version", kVersion},
        {"config_hash", to_hex(pipeline_config_hash(cfg))},
        {"schema_version", schema.version},
        {"store_hashes",
         {{"text", stores.text != nullptr ? nlohmann::json(to_hex(stores.text->content_hash()))
                                          : nlohmann::json(nullptr)},
          {"visual", stores.visual != nullptr
                         ? nlohmann::json(to_hex(stores.visual->content_hash()))
                         : nlohmann::json(nullptr)}}},
        {"images", std::move(images)},
        {"totals",
         {{"images", n},
          {"failed", failed},
          {"records", records},
          {"repairs", repairs},
          {"invalids", invalids}}}};
    return batch;
}

std::string answer_query(const geometry::EquirectImage& image, const std::string& question,
                         const PipelineConfig& cfg, const StoreSet& stores,
                         const ClientSet& clients) {
    if (question.empty()) throw Error("answer_query: empty question");
    if (clients.vlm == nullptr) throw ConfigError("answer_query needs a VLM client");
    if (image.pixels.empty()) throw Error("answer_query: image has no pixels");

    std::string prompt =
        "Answer the question about the pictured street scene or object.\n\nQuestion: " +
        question + "\n";
    if (stores.text != nullptr && cfg.k > 0 && clients.text_embedder != nullptr &&
        stores.text->size() > 0) {
        const auto hits = retrieval::query_text(
            *stores.text, clients.text_embedder->embed_text(question), cfg.k);
        prompt += "\n" + text_section(hits);
    }
    prompt += "\nAnswer concisely, citing a reference fragment when one applies.";

    return clients.vlm->complete({{image.image_id, image.pixels}}, prompt);
}

} // namespace curbsight::pipeline
