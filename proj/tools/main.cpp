// curbsight: street-furniture annotation toolkit.
//
// One binary, subcommands for each stage: knowledge-base ingestion, exemplar
// indexing, panorama splitting, batch annotation, evaluation, one-shot
// querying, and schema checks. Configuration comes from a JSON file
// (--config or CURBSIGHT_CONFIG) plus repeatable --set key=value overrides.
// Diagnostics go to stderr; machine output goes to files or stdout.
//
// Exit codes: 0 success, 1 processing/partial failure, 2 usage or config
// error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "curbsight/clients.hpp"
#include "curbsight/error.hpp"
#include "curbsight/evaluation.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/pipeline.hpp"
#include "curbsight/retrieval.hpp"
#include "curbsight/schema.hpp"
#include "curbsight/version.hpp"

namespace fs = std::filesystem;
using namespace curbsight;

namespace {

// ---------------------------------------------------------------------------
// configuration

struct EndpointConfig {
    clients::ServiceEndpoint endpoint;
    bool configured = false;
};

struct ServicesConfig {
    std::string mode = "mock"; // mock | http
    EndpointConfig detector, text_embedding, image_embedding, vlm;
    int max_concurrent = 4;
    std::optional<std::uint64_t> jitter_seed;
    // mock backends
    fs::path detector_fixture; // empty: no detections
    fs::path vlm_fixture;      // empty: hash-derived answers
    std::string vlm_mode = "fixture";
    std::string vlm_template = "{json}";
};

struct AppConfig {
    fs::path schema_path = "data/default_schema.json";
    fs::path text_store;   // empty: no text retrieval
    fs::path visual_store; // empty: no exemplar retrieval
    std::size_t dim = 512;
    std::size_t chunk_chars = 512;
    std::size_t chunk_overlap = 64;
    pipeline::PipelineConfig pipeline = pipeline::default_pipeline_config();
    ServicesConfig services;
    int jobs = 0;
};

const std::set<std::string>& known_override_keys() {
    static const std::set<std::string> keys = [] {
        std::set<std::string> k = {
            "schema",
            "jobs",
            "stores.text",
            "stores.visual",
            "stores.dim",
            "stores.chunk_chars",
            "stores.chunk_overlap",
            "pipeline.conf_threshold",
            "pipeline.dedup_iou",
            "pipeline.pad_fraction",
            "pipeline.k",
            "pipeline.m",
            "pipeline.context_char_budget",
            "pipeline.category_filter_on_visual",
            "pipeline.attach_panorama",
            "pipeline.system_template",
            "pipeline.object_template",
            "services.mode",
            "services.max_concurrent",
            "services.jitter_seed",
            "services.mock.detector_fixture",
            "services.mock.vlm_fixture",
            "services.mock.vlm_mode",
            "services.mock.vlm_template",
        };
        for (const char* svc : {"detector", "text_embedding", "image_embedding", "vlm"}) {
            for (const char* field :
                 {"endpoint", "model", "auth_env", "timeout_s", "max_retries"}) {
                k.insert(std::string("services.") + svc + "." + field);
            }
        }
        return k;
    }();
    return keys;
}

void apply_override(nlohmann::json& doc, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    if (!known_override_keys().count(key)) {
        throw ConfigError("--set: unknown config key '" + key + "'");
    }
    // values that parse as JSON scalars keep their type; anything else is a
    // string
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded() || value.is_structured()) value = raw;

    nlohmann::json* node = &doc;
    std::size_t start = 0;
    for (auto dot = key.find('.'); dot != std::string::npos;
         start = dot + 1, dot = key.find('.', start)) {
        node = &(*node)[key.substr(start, dot - start)];
    }
    (*node)[key.substr(start)] = std::move(value);
}

fs::path resolve_path(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

EndpointConfig parse_endpoint(const nlohmann::json& j, const std::string& name) {
    EndpointConfig out;
    for (const auto& [key, _] : j.items()) {
        static const std::set<std::string> known = {"endpoint", "model", "auth_env",
                                                    "timeout_s", "max_retries"};
        if (!known.count(key)) {
            throw ConfigError("services." + name + ": unknown key '" + key + "'");
        }
    }
    out.endpoint.base_url = j.value("endpoint", std::string());
    out.endpoint.model_name = j.value("model", std::string());
    out.endpoint.auth_env = j.value("auth_env", std::string());
    out.endpoint.timeout_s = j.value("timeout_s", 30.0);
    out.endpoint.max_retries = j.value("max_retries", 2);
    out.configured = !out.endpoint.base_url.empty();
    return out;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

AppConfig parse_app_config(const nlohmann::json& doc, const fs::path& base_dir) {
    reject_unknown(doc, {"schema", "stores", "pipeline", "services", "jobs"}, "config");
    AppConfig cfg;
    try {
        cfg.schema_path =
            resolve_path(base_dir, doc.value("schema", cfg.schema_path.string()));
        if (doc.contains("stores")) {
            const auto& st = doc["stores"];
            reject_unknown(st, {"text", "visual", "dim", "chunk_chars", "chunk_overlap"},
                           "config stores");
            cfg.text_store = resolve_path(base_dir, st.value("text", std::string()));
            cfg.visual_store = resolve_path(base_dir, st.value("visual", std::string()));
            cfg.dim = st.value("dim", cfg.dim);
            cfg.chunk_chars = st.value("chunk_chars", cfg.chunk_chars);
            cfg.chunk_overlap = st.value("chunk_overlap", cfg.chunk_overlap);
        }
        cfg.pipeline =
            pipeline::pipeline_config_from_json(doc.value("pipeline", nlohmann::json::object()));
        if (doc.contains("services")) {
            const auto& sv = doc["services"];
            reject_unknown(sv,
                           {"mode", "detector", "text_embedding", "image_embedding", "vlm",
                            "max_concurrent", "jitter_seed", "mock"},
                           "config services");
            auto& out = cfg.services;
            out.mode = sv.value("mode", out.mode);
            if (out.mode != "mock" && out.mode != "http") {
                throw ConfigError("services.mode must be 'mock' or 'http'");
            }
            out.detector = parse_endpoint(sv.value("detector", nlohmann::json::object()),
                                          "detector");
            out.text_embedding =
                parse_endpoint(sv.value("text_embedding", nlohmann::json::object()),
                               "text_embedding");
            out.image_embedding =
                parse_endpoint(sv.value("image_embedding", nlohmann::json::object()),
                               "image_embedding");
            out.vlm = parse_endpoint(sv.value("vlm", nlohmann::json::object()), "vlm");
            out.max_concurrent = sv.value("max_concurrent", out.max_concurrent);
            if (sv.contains("jitter_seed") && !sv["jitter_seed"].is_null()) {
                out.jitter_seed = sv["jitter_seed"].get<std::uint64_t>();
            }
            if (sv.contains("mock")) {
                const auto& mk = sv["mock"];
                reject_unknown(
                    mk, {"detector_fixture", "vlm_fixture", "vlm_mode", "vlm_template"},
                    "config services.mock");
                out.detector_fixture =
                    resolve_path(base_dir, mk.value("detector_fixture", std::string()));
                out.vlm_fixture =
                    resolve_path(base_dir, mk.value("vlm_fixture", std::string()));
                out.vlm_mode = mk.value("vlm_mode", out.vlm_mode);
                out.vlm_template = mk.value("vlm_template", out.vlm_template);
            }
        }
        cfg.jobs = doc.value("jobs", cfg.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

AppConfig load_config(const fs::path& config_arg, const std::vector<std::string>& overrides) {
    nlohmann::json doc = nlohmann::json::object();
    fs::path base_dir = fs::current_path();
    fs::path config_path = config_arg;
    if (config_path.empty()) {
        if (const char* env = std::getenv("CURBSIGHT_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ConfigError("config file not found: " + config_path.string());
        doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) {
            throw ConfigError("config file is not valid JSON: " + config_path.string());
        }
        base_dir = fs::absolute(config_path).parent_path();
    }
    for (const auto& kv : overrides) apply_override(doc, kv);
    return parse_app_config(doc, base_dir);
}

// ---------------------------------------------------------------------------
// client and store construction

clients::MockVlmMode parse_vlm_mode(const std::string& mode) {
    if (mode == "fixture") return clients::MockVlmMode::Fixture;
    if (mode == "malformed") return clients::MockVlmMode::Malformed;
    if (mode == "echo") return clients::MockVlmMode::Echo;
    throw ConfigError("services.mock.vlm_mode must be fixture|malformed|echo, got '" + mode +
                      "'");
}

struct ClientBundle {
    std::shared_ptr<clients::TraceLog> trace;
    std::unique_ptr<clients::Detector> detector;
    std::unique_ptr<clients::TextEmbedder> text_embedder;
    std::unique_ptr<clients::ImageEmbedder> image_embedder;
    std::unique_ptr<clients::VlmClient> vlm;

    pipeline::ClientSet set() const {
        return {detector.get(), text_embedder.get(), image_embedder.get(), vlm.get()};
    }
};

ClientBundle build_clients(const AppConfig& cfg, const schema::AttributeSchema& schema,
                           const fs::path& trace_path) {
    ClientBundle out;
    const auto& sv = cfg.services;
    if (!trace_path.empty()) out.trace = std::make_shared<clients::TraceLog>(trace_path);

    if (sv.mode == "mock") {
        out.detector = sv.detector_fixture.empty()
                           ? std::make_unique<clients::MockDetector>(nlohmann::json::object())
                           : std::make_unique<clients::MockDetector>(sv.detector_fixture);
        out.text_embedder = std::make_unique<clients::MockTextEmbedder>(cfg.dim);
        out.image_embedder = std::make_unique<clients::MockImageEmbedder>(cfg.dim);
        const auto mode = parse_vlm_mode(sv.vlm_mode);
        if (sv.vlm_fixture.empty()) {
            out.vlm = std::make_unique<clients::MockVlm>(schema, nlohmann::json::object(),
                                                         mode, sv.vlm_template);
        } else {
            out.vlm = std::make_unique<clients::MockVlm>(clients::MockVlm::from_file(
                schema, sv.vlm_fixture, mode, sv.vlm_template));
        }
        return out;
    }

    clients::HttpOptions options{out.trace, sv.max_concurrent, sv.jitter_seed};
    if (sv.detector.configured) {
        out.detector = clients::make_http_detector(sv.detector.endpoint, options);
    }
    if (sv.text_embedding.configured) {
        out.text_embedder =
            clients::make_http_text_embedder(sv.text_embedding.endpoint, cfg.dim, options);
    }
    if (sv.image_embedding.configured) {
        out.image_embedder =
            clients::make_http_image_embedder(sv.image_embedding.endpoint, cfg.dim, options);
    }
    if (sv.vlm.configured) out.vlm = clients::make_http_vlm(sv.vlm.endpoint, options);
    return out;
}

retrieval::VectorStore open_store(const fs::path& path, retrieval::Modality modality,
                                  std::size_t dim, const char* hint) {
    if (fs::exists(path)) {
        auto store = retrieval::VectorStore::load(path);
        if (store.dim() != dim) {
            throw ConfigError("store " + path.string() + " has dim " +
                              std::to_string(store.dim()) + ", config says " +
                              std::to_string(dim));
        }
        return store;
    }
    if (hint) {
        throw ConfigError("store file not found: " + path.string() + " (" + hint + ")");
    }
    return retrieval::VectorStore(modality, dim);
}

geometry::EquirectImage load_panorama(const fs::path& path) {
    geometry::EquirectImage pano;
    pano.image_id = path.stem().string();
    pano.pixels = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (pano.pixels.empty()) throw Error("unreadable image: " + path.string());
    return pano;
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw Error("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_ingest_kb(const AppConfig& cfg, const std::vector<fs::path>& docs) {
    if (cfg.text_store.empty()) {
        throw ConfigError("ingest-kb needs stores.text in the config");
    }
    clients::MockTextEmbedder mock_embedder(cfg.dim);
    std::unique_ptr<clients::TextEmbedder> http_embedder;
    clients::TextEmbedder* embedder = &mock_embedder;
    if (cfg.services.mode == "http") {
        if (!cfg.services.text_embedding.configured) {
            throw ConfigError("ingest-kb in http mode needs services.text_embedding");
        }
        http_embedder = clients::make_http_text_embedder(cfg.services.text_embedding.endpoint,
                                                         cfg.dim, {});
        embedder = http_embedder.get();
    }

    auto store = open_store(cfg.text_store, retrieval::Modality::Text, cfg.dim, nullptr);
    const auto report =
        retrieval::ingest_documents(docs, *embedder, store, cfg.chunk_chars, cfg.chunk_overlap);
    store.save(cfg.text_store);

    for (const auto& s : report.skipped) std::cerr << "skipped: " << s << "\n";
    std::cerr << "ingested " << report.items << " chunks from " << report.documents
              << " documents -> " << cfg.text_store.string() << "\n";
    std::cout << nlohmann::json{{"documents", report.documents},
                                {"chunks", report.items},
                                {"skipped", report.skipped.size()},
                                {"store_entries", store.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_index_exemplars(const AppConfig& cfg, const schema::AttributeSchema& schema,
                        const fs::path& annotations, const fs::path& images_root) {
    if (cfg.visual_store.empty()) {
        throw ConfigError("index-exemplars needs stores.visual in the config");
    }
    clients::MockImageEmbedder mock_embedder(cfg.dim);
    std::unique_ptr<clients::ImageEmbedder> http_embedder;
    clients::ImageEmbedder* embedder = &mock_embedder;
    if (cfg.services.mode == "http") {
        if (!cfg.services.image_embedding.configured) {
            throw ConfigError("index-exemplars in http mode needs services.image_embedding");
        }
        http_embedder = clients::make_http_image_embedder(
            cfg.services.image_embedding.endpoint, cfg.dim, {});
        embedder = http_embedder.get();
    }

    auto store = open_store(cfg.visual_store, retrieval::Modality::Visual, cfg.dim, nullptr);
    const auto report = retrieval::index_exemplars(annotations, images_root, *embedder, store,
                                                   schema, cfg.pipeline.pad_fraction);
    store.save(cfg.visual_store);

    for (const auto& s : report.skipped) std::cerr << "skipped: " << s << "\n";
    std::cerr << "indexed " << report.items << " exemplars -> " << cfg.visual_store.string()
              << "\n";
    std::cout << nlohmann::json{{"exemplars", report.items},
                                {"skipped", report.skipped.size()},
                                {"store_entries", store.size()}}
                     .dump()
              << "\n";
    return report.items == 0 && !report.skipped.empty() ? 1 : 0;
}

int cmd_split(const AppConfig& cfg, const fs::path& pano_path, const fs::path& out_dir) {
    const auto pano = load_panorama(pano_path);
    const auto views = geometry::split_panorama(pano, cfg.pipeline.views);
    fs::create_directories(out_dir);
    for (const auto& [view_id, pixels] : views) {
        const fs::path out = out_dir / (pano.image_id + "." + view_id + ".png");
        if (!cv::imwrite(out.string(), pixels)) {
            throw Error("failed to write " + out.string());
        }
        std::cout << out.string() << "\n";
    }
    std::cerr << "split " << pano_path.string() << " into " << views.size() << " views\n";
    return 0;
}

std::vector<pipeline::BatchInput> scan_panoramas(const fs::path& input_dir) {
    if (!fs::is_directory(input_dir)) {
        throw ConfigError("not a directory: " + input_dir.string());
    }
    std::vector<pipeline::BatchInput> inputs;
    for (const auto& entry : fs::directory_iterator(input_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
            inputs.push_back({entry.path().stem().string(), entry.path()});
        }
    }
    std::sort(inputs.begin(), inputs.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    return inputs;
}

int cmd_annotate(const AppConfig& cfg, const schema::AttributeSchema& schema,
                 const fs::path& input_dir, const fs::path& out_dir, int jobs,
                 const fs::path& trace_path) {
    const auto inputs = scan_panoramas(input_dir);
    if (inputs.empty()) throw Error("no panoramas (png/jpg) in " + input_dir.string());

    const auto clients = build_clients(cfg, schema, trace_path);
    std::optional<retrieval::VectorStore> text_store, visual_store;
    if (!cfg.text_store.empty() && cfg.pipeline.k > 0) {
        text_store = open_store(cfg.text_store, retrieval::Modality::Text, cfg.dim,
                                "run ingest-kb first or clear stores.text");
    }
    if (!cfg.visual_store.empty() && cfg.pipeline.m > 0) {
        visual_store = open_store(cfg.visual_store, retrieval::Modality::Visual, cfg.dim,
                                  "run index-exemplars first or clear stores.visual");
    }
    pipeline::StoreSet stores{text_store ? &*text_store : nullptr,
                              visual_store ? &*visual_store : nullptr};

    const auto result = pipeline::run_batch(inputs, cfg.pipeline, schema, stores,
                                            clients.set(), jobs != 0 ? jobs : cfg.jobs);

    fs::create_directories(out_dir);
    for (const auto& scene : result.scenes) {
        std::string body;
        for (const auto& rec : scene.records) {
            body += schema::record_to_json(rec).dump() + "\n";
        }
        write_text_file(out_dir / (scene.image_id + ".records.jsonl"), body);
        if (!scene.ok) {
            std::cerr << "scene " << scene.image_id << " failed: " << scene.error << "\n";
        }
    }
    write_text_file(out_dir / "manifest.json", result.manifest.dump(2) + "\n");

    const auto& totals = result.manifest["totals"];
    std::cerr << "annotated " << totals["images"] << " images: " << totals["records"]
              << " records, " << totals["repairs"] << " repaired, " << totals["invalids"]
              << " invalid, " << totals["failed"] << " failed -> " << out_dir.string() << "\n";
    return result.all_ok && result.fully_valid ? 0 : 1;
}

int cmd_evaluate(const AppConfig& cfg, const schema::AttributeSchema& schema,
                 const fs::path& gt_path, const fs::path& pred_path, const fs::path& out_dir,
                 const std::string& groups, bool csv) {
    if (!groups.empty() && groups != "city") {
        throw ConfigError("--groups supports only 'city'");
    }
    const auto gt = evaluation::load_ground_truth(gt_path);
    const auto preds = evaluation::load_predictions(pred_path, gt);
    const auto report = evaluation::build_report(gt, preds, &schema, groups == "city");

    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.json", evaluation::report_to_json(report).dump(2) + "\n");
    const std::string text = evaluation::render_report_text(report);
    write_text_file(out_dir / "report.txt", text);
    if (csv) {
        write_text_file(out_dir / "report.csv", evaluation::render_report_csv(report));
    }
    std::cout << text;
    std::cerr << "wrote report.json/report.txt to " << out_dir.string() << "\n";
    return 0;
}

int cmd_query(const AppConfig& cfg, const schema::AttributeSchema& schema,
              const fs::path& image_path, const std::string& question,
              const fs::path& trace_path) {
    const auto clients = build_clients(cfg, schema, trace_path);
    std::optional<retrieval::VectorStore> text_store;
    if (!cfg.text_store.empty() && cfg.pipeline.k > 0 && fs::exists(cfg.text_store)) {
        text_store = open_store(cfg.text_store, retrieval::Modality::Text, cfg.dim, nullptr);
    }
    pipeline::StoreSet stores{text_store ? &*text_store : nullptr, nullptr};

    const auto pano = load_panorama(image_path);
    std::cout << pipeline::answer_query(pano, question, cfg.pipeline, stores, clients.set())
              << "\n";
    return 0;
}

int cmd_schema_validate(const AppConfig& cfg, const fs::path& file) {
    // records JSONL validates against the configured schema; anything else
    // is treated as a schema definition file
    if (file.extension() == ".jsonl") {
        const auto schema = schema::load_schema(cfg.schema_path);
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error("file not found: " + file.string());
        nlohmann::json by_status{{"ok", 0}, {"repair_applied", 0}, {"invalid", 0}};
        nlohmann::json violations = nlohmann::json::array();
        std::size_t records = 0, valid = 0;
        std::string line;
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ++records;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                violations.push_back({{"line", lineno}, {"why", "not valid JSON"}});
                continue;
            }
            const auto rec = schema::record_from_json(j);
            by_status[to_string(rec.status)] = by_status[to_string(rec.status)].get<int>() + 1;
            const auto check = schema::validate_record(rec, schema);
            bool record_ok = check.valid;
            for (const auto& v : check.violations) {
                violations.push_back({{"line", lineno},
                                      {"object_id", rec.object_id},
                                      {"path", v.path},
                                      {"code", v.code},
                                      {"message", v.message}});
            }
            // a record the pipeline already gave up on never counts as valid,
            // even if what little it carries is structurally fine
            if (rec.status == schema::RecordStatus::Invalid) {
                violations.push_back({{"line", lineno},
                                      {"object_id", rec.object_id},
                                      {"path", "status"},
                                      {"code", "invalid-status"},
                                      {"message", "record is marked invalid"}});
                record_ok = false;
            }
            if (record_ok) ++valid;
        }
        const bool ok = records > 0 && valid == records;
        std::cout << nlohmann::json{{"records", records},
                                    {"valid", valid},
                                    {"by_status", by_status},
                                    {"violations", violations},
                                    {"ok", ok}}
                         .dump(2)
                  << "\n";
        return ok ? 0 : 1;
    }

    try {
        const auto schema = schema::load_schema(file);
        std::size_t attrs = 0;
        for (const auto& cat : schema.categories) attrs += cat.attributes.size();
        std::cout << nlohmann::json{{"ok", true},
                                    {"version", schema.version},
                                    {"categories", schema.categories.size()},
                                    {"attributes", attrs}}
                         .dump()
                  << "\n";
        return 0;
    } catch (const Error& e) {
        std::cout << nlohmann::json{{"ok", false}, {"why", e.what()}}.dump() << "\n";
        std::cerr << "invalid schema: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"curbsight: street-furniture annotation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    fs::path config_path;
    std::vector<std::string> overrides;
    fs::path trace_path;
    bool verbose = false;
    app.add_option("--config", config_path, "config file (or CURBSIGHT_CONFIG)");
    app.add_option("--set", overrides, "override a config key, e.g. --set pipeline.k=5");
    app.add_option("--trace", trace_path, "append model request/response transcripts (JSONL)");
    app.add_flag("-v,--verbose", verbose, "chatty diagnostics");

    auto* ingest = app.add_subcommand("ingest-kb", "chunk and embed documents into the text store");
    std::vector<fs::path> docs;
    ingest->add_option("docs", docs, "document files")->required();

    auto* index = app.add_subcommand("index-exemplars",
                                     "embed annotated crops into the visual store");
    fs::path annotations, images_root;
    index->add_option("annotations", annotations, "COCO-style annotation file")->required();
    index->add_option("images", images_root, "image root directory")->required();

    auto* split = app.add_subcommand("split", "render the configured perspective views");
    fs::path split_pano, split_out = ".";
    split->add_option("panorama", split_pano, "equirectangular image")->required();
    split->add_option("--out", split_out, "output directory (default .)");

    auto* annotate = app.add_subcommand("annotate", "detect and annotate a panorama directory");
    fs::path annotate_dir, annotate_out;
    int annotate_jobs = 0;
    annotate->add_option("input", annotate_dir, "directory of panoramas")->required();
    annotate->add_option("--out", annotate_out, "output directory")->required();
    annotate->add_option("--jobs", annotate_jobs, "worker count (0 = hardware)");

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
    fs::path gt_path, pred_path, eval_out = ".";
    std::string groups;
    bool csv = false;
    evaluate->add_option("--gt", gt_path, "COCO-style ground truth JSON")->required();
    evaluate->add_option("--pred", pred_path, "records JSONL or COCO results JSON")->required();
    evaluate->add_option("--out", eval_out, "report directory (default .)");
    evaluate->add_option("--groups", groups, "grouping mode: city");
    evaluate->add_flag("--csv", csv, "also write report.csv");

    auto* query = app.add_subcommand("query", "ask one free-form question about an image");
    fs::path query_image;
    std::string question;
    query->add_option("image", query_image, "image file")->required();
    query->add_option("question", question, "natural-language question")->required();

    auto* schema_cmd = app.add_subcommand("schema", "schema utilities");
    schema_cmd->require_subcommand(1);
    auto* validate = schema_cmd->add_subcommand(
        "validate", "check a schema definition (records .jsonl validates against the "
                    "configured schema)");
    fs::path validate_file;
    validate->add_option("file", validate_file, "schema JSON or records JSONL")->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    schema_cmd->fallthrough();
    validate->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        const AppConfig cfg = load_config(config_path, overrides);
        if (verbose) {
            std::cerr << "schema: " << cfg.schema_path.string() << ", services: "
                      << cfg.services.mode << "\n";
        }
        // validate loads what it needs itself; a definition-file check must
        // not require the configured schema to load
        if (validate->parsed()) return cmd_schema_validate(cfg, validate_file);
        const auto schema = schema::load_schema(cfg.schema_path);

        if (ingest->parsed()) return cmd_ingest_kb(cfg, docs);
        if (index->parsed()) return cmd_index_exemplars(cfg, schema, annotations, images_root);
        if (split->parsed()) return cmd_split(cfg, split_pano, split_out);
        if (annotate->parsed()) {
            return cmd_annotate(cfg, schema, annotate_dir, annotate_out, annotate_jobs,
                                trace_path);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(cfg, schema, gt_path, pred_path, eval_out, groups, csv);
        }
        if (query->parsed()) return cmd_query(cfg, schema, query_image, question, trace_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        std::cerr << "run '" << (argc > 0 ? argv[0] : "curbsight") << " --help' for usage\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
