#include "curbsight/clients.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "curbsight/error.hpp"
#include "curbsight/hash.hpp"

namespace curbsight::clients {

TraceLog::TraceLog(const std::filesystem::path& path) : stream_(path, std::ios::app) {
    if (!stream_) throw Error("cannot open trace file: " + path.string());
}

void TraceLog::append(const std::string& service, nlohmann::json entry) {
    entry["service"] = service;
    std::lock_guard<std::mutex> lock(mutex_);
    stream_ << entry.dump() << "\n";
    stream_.flush();
}

std::vector<Detection> normalize_labels(const std::vector<Detection>& dets,
                                        const schema::AttributeSchema& schema, int* dropped) {
    std::vector<Detection> out;
    int misses = 0;
    for (const auto& d : dets) {
        const schema::CategoryDef* cat = schema.find_category(d.label);
        if (cat == nullptr) {
            ++misses;
            continue;
        }
        Detection n = d;
        n.label = cat->name;
        out.push_back(std::move(n));
    }
    if (dropped != nullptr) *dropped = misses;
    return out;
}

std::string resolve_auth_token(const ServiceEndpoint& endpoint) {
    if (endpoint.auth_env.empty()) return {};
    const char* value = std::getenv(endpoint.auth_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw ConfigError("endpoint requires token in environment variable '" +
                          endpoint.auth_env + "' but it is not set");
    }
    return value;
}

// --- mock embedders --------------------------------------------------------

namespace {

// fold one hashed feature into the signed bucket vector
void fold_feature(std::vector<double>& acc, std::uint64_t h) {
    const std::size_t idx = static_cast<std::size_t>(h % acc.size());
    acc[idx] += (h & (1ull << 63)) ? -1.0 : 1.0;
}

std::vector<double> finish(std::vector<double> acc, std::uint64_t whole_input_hash) {
    double norm2 = 0.0;
    for (const double v : acc) norm2 += v * v;
    if (norm2 == 0.0) {
        // degenerate cancellation: fall back to a single deterministic spike
        acc[whole_input_hash % acc.size()] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : acc) v *= inv;
    return acc;
}

} // namespace

MockTextEmbedder::MockTextEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error("embedding dimension must be positive");
}

std::vector<double> MockTextEmbedder::embed_text(const std::string& body) {
    if (body.empty()) throw Error("embed_text: empty input");
    std::vector<double> acc(dim_, 0.0);
    std::string token;
    for (const char raw : body) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else if (!token.empty()) {
            fold_feature(acc, fnv1a64(token));
            token.clear();
        }
    }
    if (!token.empty()) fold_feature(acc, fnv1a64(token));
    return finish(std::move(acc), fnv1a64(body));
}

MockImageEmbedder::MockImageEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error("embedding dimension must be positive");
}

std::vector<double> MockImageEmbedder::embed_image(const cv::Mat& image) {
    if (image.empty()) throw Error("embed_image: empty image");
    cv::Mat cont = image.isContinuous() ? image : image.clone();
    const auto* data = cont.ptr<unsigned char>(0);
    const std::size_t len = cont.total() * cont.elemSize();

    std::vector<double> acc(dim_, 0.0);
    // shape feature ties equal pixel content at different sizes apart
    const std::string shape = std::to_string(cont.cols) + "x" + std::to_string(cont.rows) +
                              "x" + std::to_string(cont.channels());
    fold_feature(acc, fnv1a64(shape));

    constexpr std::size_t kBlock = 256;
    for (std::size_t off = 0; off < len; off += kBlock) {
        const std::size_t n = std::min(kBlock, len - off);
        fold_feature(acc, fnv1a64(data + off, n));
    }
    return finish(std::move(acc), fnv1a64(data, len));
}

// --- mock detector ----------------------------------------------------------

namespace {

std::vector<Detection> parse_detection_list(const nlohmann::json& list,
                                            const std::string& image_id) {
    if (!list.is_array()) {
        throw Error("detector fixture for '" + image_id + "': expected an array");
    }
    std::vector<Detection> dets;
    for (const auto& dj : list) {
        Detection d;
        d.label = dj.at("label").get<std::string>();
        d.confidence = dj.at("confidence").get<double>();
        const auto& b = dj.at("bbox");
        if (!b.is_array() || b.size() != 4) {
            throw Error("detector fixture for '" + image_id + "': bbox must be [x0,y0,x1,y1]");
        }
        d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                  b[3].get<double>()};
        dets.push_back(std::move(d));
    }
    return dets;
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

MockDetector::MockDetector(const std::filesystem::path& fixture_file)
    : MockDetector(read_json_file(fixture_file, "detector fixture")) {}

MockDetector::MockDetector(const nlohmann::json& fixture) {
    if (!fixture.is_object()) throw Error("detector fixture: expected an object");
    for (const auto& [image_id, list] : fixture.items()) {
        fixtures_[image_id] = parse_detection_list(list, image_id);
    }
}

std::vector<Detection> MockDetector::detect(const ImageRef& image,
                                            const std::vector<std::string>& vocabulary,
                                            double conf_threshold) {
    if (vocabulary.empty()) throw Error("detect: empty vocabulary");
    std::vector<Detection> out;
    const auto it = fixtures_.find(image.id);
    if (it == fixtures_.end()) return out;
    for (const auto& d : it->second) {
        if (d.confidence >= conf_threshold) out.push_back(d);
    }
    return out;
}

// --- mock VLM ----------------------------------------------------------------

MockVlm::MockVlm(const schema::AttributeSchema& schema, nlohmann::json fixtures,
                 MockVlmMode mode, std::string response_template)
    : schema_(schema),
      fixtures_(std::move(fixtures)),
      mode_(mode),
      template_(std::move(response_template)) {
    if (template_.find("{json}") == std::string::npos) {
        throw Error("VLM response template must contain the {json} placeholder");
    }
    if (!fixtures_.is_object()) throw Error("VLM fixture: expected an object");
}

MockVlm MockVlm::from_file(const schema::AttributeSchema& schema,
                           const std::filesystem::path& fixture_file, MockVlmMode mode,
                           std::string response_template) {
    return MockVlm(schema, read_json_file(fixture_file, "VLM fixture"), mode,
                   std::move(response_template));
}

std::string MockVlm::complete(const std::vector<ImageRef>& images, const std::string& prompt) {
    if (images.empty()) throw Error("complete: no images attached");
    if (prompt.empty()) throw Error("complete: empty prompt");

    switch (mode_) {
        case MockVlmMode::Echo:
            return prompt;
        case MockVlmMode::Malformed:
            return "The object appears weathered and I could not settle on any one reading "
                   "of its attributes, sorry.";
        case MockVlmMode::Fixture:
            break;
    }

    const std::string& crop_id = images.front().id;
    nlohmann::json body;
    if (auto it = fixtures_.find(crop_id); it != fixtures_.end()) {
        body = *it;
    } else {
        // unknown crop: derive stable pseudo-answers so batch runs stay
        // deterministic without exhaustive fixtures; the prompt's
        // "Category:" line tells us which attribute set to fill
        std::string category;
        if (const auto pos = prompt.find("Category: "); pos != std::string::npos) {
            const auto eol = prompt.find('\n', pos);
            category = prompt.substr(pos + 10, eol == std::string::npos ? std::string::npos
                                                                        : eol - pos - 10);
        }
        const schema::CategoryDef* cat = schema_.find_category(category);
        if (cat == nullptr && !schema_.categories.empty()) {
            cat = &schema_.categories[fnv1a64(crop_id) % schema_.categories.size()];
        }
        if (cat == nullptr) throw Error("VLM mock: empty schema");
        body["category"] = cat->name;
        nlohmann::json attrs = nlohmann::json::array();
        for (const auto& def : cat->attributes) {
            const std::uint64_t h = fnv1a64(crop_id + "|" + def.name);
            std::string value = "plain";
            if (def.kind == schema::AttributeKind::Enumerated) {
                value = def.allowed_values[h % def.allowed_values.size()];
            }
            attrs.push_back({{"name", def.name},
                             {"value", value},
                             {"confidence", 0.5 + static_cast<double>(h % 50) / 100.0}});
        }
        body["attributes"] = std::move(attrs);
    }

    std::string out = template_;
    const auto pos = out.find("{json}");
    out.replace(pos, 6, body.dump(2));
    return out;
}

} // namespace curbsight::clients
