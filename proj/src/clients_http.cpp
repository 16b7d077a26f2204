#include <chrono>
#include <cmath>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <opencv2/imgcodecs.hpp>

#include "curbsight/clients.hpp"
#include "curbsight/error.hpp"
#include "curbsight/hash.hpp"

namespace curbsight::clients {

namespace {

std::string base64_encode(const unsigned char* data, std::size_t len) {
    static const char* table =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        if (i + 2 < len) v |= data[i + 2];
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? table[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? table[v & 63] : '=');
    }
    return out;
}

std::string png_data_url(const cv::Mat& image) {
    if (image.empty()) throw Error("cannot encode an empty image");
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", image, buf)) throw Error("png encoding failed");
    return "data:image/png;base64," + base64_encode(buf.data(), buf.size());
}

// strip bulk image payloads before writing a transcript line
nlohmann::json sanitize_for_trace(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s.rfind("data:image/", 0) == 0) {
            return "<image " + std::to_string(s.size()) + " chars>";
        }
        return j;
    }
    if (j.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [k, v] : j.items()) out[k] = sanitize_for_trace(v);
        return out;
    }
    if (j.is_array()) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& v : j) out.push_back(sanitize_for_trace(v));
        return out;
    }
    return j;
}

class HttpCore {
  public:
    HttpCore(ServiceEndpoint endpoint, HttpOptions options, std::string service)
        : endpoint_(std::move(endpoint)),
          options_(std::move(options)),
          service_(std::move(service)),
          token_(resolve_auth_token(endpoint_)),
          slots_(std::max(1, options_.max_concurrent)) {
        if (endpoint_.base_url.empty()) {
            throw ConfigError(service_ + ": endpoint base_url not configured");
        }
        if (endpoint_.timeout_s <= 0) throw ConfigError(service_ + ": timeout must be > 0");
        if (endpoint_.max_retries < 0) throw ConfigError(service_ + ": retries must be >= 0");
    }

    nlohmann::json post(const std::string& path, const nlohmann::json& body) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<64>& s;
            ~Release() { s.release(); }
        } release{slots_};

        const std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
            if (attempt > 0) backoff(attempt);

            httplib::Client cli(endpoint_.base_url);
            cli.set_connection_timeout(std::chrono::duration<double>(endpoint_.timeout_s));
            cli.set_read_timeout(std::chrono::duration<double>(endpoint_.timeout_s));
            cli.set_write_timeout(std::chrono::duration<double>(endpoint_.timeout_s));
            httplib::Headers headers;
            if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

            auto res = cli.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "status " + std::to_string(res->status) + ": " + res->body;
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                // client-side errors are not retryable; surface verbatim
                trace(path, body, nlohmann::json{{"status", res->status}, {"body", res->body}});
                throw Error(service_ + ": status " + std::to_string(res->status) + ": " +
                            res->body);
            }
            nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) {
                trace(path, body, nlohmann::json{{"status", res->status}, {"body", res->body}});
                throw Error(service_ + ": response is not valid JSON");
            }
            trace(path, body, parsed);
            return parsed;
        }
        throw Error(service_ + ": request failed after " +
                    std::to_string(endpoint_.max_retries + 1) + " attempts (" + last_error +
                    ")");
    }

    const ServiceEndpoint& endpoint() const { return endpoint_; }

  private:
    void backoff(int attempt) {
        long jitter_ms;
        {
            std::lock_guard<std::mutex> lock(rng_mutex_);
            if (!rng_) {
                const std::uint64_t seed = options_.jitter_seed
                                               ? *options_.jitter_seed ^ fnv1a64(service_)
                                               : std::random_device{}();
                rng_.emplace(seed);
            }
            jitter_ms = static_cast<long>((*rng_)() % 100);
        }
        const long ms = 250L * (1L << std::min(attempt - 1, 6)) + jitter_ms;
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }

    void trace(const std::string& path, const nlohmann::json& request,
               const nlohmann::json& response) {
        if (!options_.trace) return;
        options_.trace->append(service_, {{"url", endpoint_.base_url + path},
                                          {"model", endpoint_.model_name},
                                          {"request", sanitize_for_trace(request)},
                                          {"response", sanitize_for_trace(response)}});
    }

    ServiceEndpoint endpoint_;
    HttpOptions options_;
    std::string service_;
    std::string token_;
    std::counting_semaphore<64> slots_;
    std::mutex rng_mutex_;
    std::optional<std::mt19937_64> rng_;
};

std::vector<double> parse_embedding(const nlohmann::json& resp, std::size_t expected_dim,
                                    const char* service) {
    if (!resp.contains("data") || !resp["data"].is_array() || resp["data"].empty() ||
        !resp["data"][0].contains("embedding")) {
        throw Error(std::string(service) + ": response lacks data[0].embedding");
    }
    std::vector<double> v = resp["data"][0]["embedding"].get<std::vector<double>>();
    if (expected_dim != 0 && v.size() != expected_dim) {
        throw Error(std::string(service) + ": embedding dim " + std::to_string(v.size()) +
                    " does not match configured dim " + std::to_string(expected_dim));
    }
    double norm2 = 0.0;
    for (const double x : v) norm2 += x * x;
    if (norm2 == 0.0) throw Error(std::string(service) + ": zero embedding returned");
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

class HttpTextEmbedder final : public TextEmbedder {
  public:
    HttpTextEmbedder(ServiceEndpoint endpoint, std::size_t dim, HttpOptions options)
        : core_(std::move(endpoint), std::move(options), "text-embedder"), dim_(dim) {}

    std::size_t dim() const override { return dim_; }

    std::vector<double> embed_text(const std::string& body) override {
        if (body.empty()) throw Error("embed_text: empty input");
        const nlohmann::json resp = core_.post(
            "/v1/embeddings", {{"model", core_.endpoint().model_name}, {"input", body}});
        return parse_embedding(resp, dim_, "text-embedder");
    }

  private:
    HttpCore core_;
    std::size_t dim_;
};

class HttpImageEmbedder final : public ImageEmbedder {
  public:
    HttpImageEmbedder(ServiceEndpoint endpoint, std::size_t dim, HttpOptions options)
        : core_(std::move(endpoint), std::move(options), "image-embedder"), dim_(dim) {}

    std::size_t dim() const override { return dim_; }

    std::vector<double> embed_image(const cv::Mat& image) override {
        const nlohmann::json resp =
            core_.post("/v1/embeddings",
                       {{"model", core_.endpoint().model_name}, {"input", png_data_url(image)}});
        return parse_embedding(resp, dim_, "image-embedder");
    }

  private:
    HttpCore core_;
    std::size_t dim_;
};

class HttpVlm final : public VlmClient {
  public:
    HttpVlm(ServiceEndpoint endpoint, HttpOptions options)
        : core_(std::move(endpoint), std::move(options), "vlm") {}

    std::string complete(const std::vector<ImageRef>& images,
                         const std::string& prompt) override {
        if (images.empty()) throw Error("complete: no images attached");
        if (prompt.empty()) throw Error("complete: empty prompt");

        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", prompt}});
        for (const auto& image : images) {
            content.push_back(
                {{"type", "image_url"}, {"image_url", {{"url", png_data_url(image.pixels)}}}});
        }
        const nlohmann::json resp = core_.post(
            "/v1/chat/completions",
            {{"model", core_.endpoint().model_name},
             {"messages", nlohmann::json::array({nlohmann::json{
                              {"role", "user"}, {"content", std::move(content)}}})}});
        try {
            return resp.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error("vlm: response lacks choices[0].message.content");
        }
    }

  private:
    HttpCore core_;
};

class HttpDetector final : public Detector {
  public:
    HttpDetector(ServiceEndpoint endpoint, HttpOptions options)
        : core_(std::move(endpoint), std::move(options), "detector") {}

    std::vector<Detection> detect(const ImageRef& image,
                                  const std::vector<std::string>& vocabulary,
                                  double conf_threshold) override {
        if (vocabulary.empty()) throw Error("detect: empty vocabulary");
        const nlohmann::json resp =
            core_.post("/v1/detect", {{"model", core_.endpoint().model_name},
                                      {"image", png_data_url(image.pixels)},
                                      {"captions", vocabulary}});
        if (!resp.contains("boxes") || !resp.contains("labels") || !resp.contains("scores")) {
            throw Error("detector: response must carry boxes[], labels[], scores[]");
        }
        const auto& boxes = resp["boxes"];
        const auto& labels = resp["labels"];
        const auto& scores = resp["scores"];
        if (boxes.size() != labels.size() || boxes.size() != scores.size()) {
            throw Error("detector: boxes/labels/scores length mismatch");
        }
        std::vector<Detection> out;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            Detection d;
            const auto& b = boxes[i];
            if (!b.is_array() || b.size() != 4) {
                throw Error("detector: box " + std::to_string(i) + " must be [x0,y0,x1,y1]");
            }
            d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                      b[3].get<double>()};
            d.label = labels[i].get<std::string>();
            d.confidence = scores[i].get<double>();
            if (d.confidence >= conf_threshold) out.push_back(std::move(d));
        }
        return out;
    }

  private:
    HttpCore core_;
};

} // namespace

std::unique_ptr<Detector> make_http_detector(ServiceEndpoint endpoint, HttpOptions options) {
    return std::make_unique<HttpDetector>(std::move(endpoint), std::move(options));
}

std::unique_ptr<TextEmbedder> make_http_text_embedder(ServiceEndpoint endpoint, std::size_t dim,
                                                      HttpOptions options) {
    return std::make_unique<HttpTextEmbedder>(std::move(endpoint), dim, std::move(options));
}

std::unique_ptr<ImageEmbedder> make_http_image_embedder(ServiceEndpoint endpoint,
                                                        std::size_t dim, HttpOptions options) {
    return std::make_unique<HttpImageEmbedder>(std::move(endpoint), dim, std::move(options));
}

std::unique_ptr<VlmClient> make_http_vlm(ServiceEndpoint endpoint, HttpOptions options) {
    return std::make_unique<HttpVlm>(std::move(endpoint), std::move(options));
}

} // namespace curbsight::clients
