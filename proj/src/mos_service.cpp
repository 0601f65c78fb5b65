#include "s2seval/mos_service.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

namespace s2seval::mos {

namespace {

std::string content_type_for(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".wav") return "audio/wav";
    if (ext == ".mp3") return "audio/mpeg";
    if (ext == ".flac") return "audio/flac";
    if (ext == ".ogg") return "audio/ogg";
    return "application/octet-stream";
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

} // namespace

struct MosService::Impl {
    RatingStore& store;
    stats::BootstrapConfig bootstrap;
    httplib::Server server;
};

MosService::MosService(RatingStore& store, stats::BootstrapConfig bootstrap, std::filesystem::path static_dir)
    : impl_(new Impl{store, bootstrap, {}}) {
    auto& server = impl_->server;
    Impl* impl = impl_.get();

    server.Get("/api/assignments", [impl](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("rater")) return send_error(res, 400, "missing 'rater' query parameter");
        try {
            res.set_content(assignments_to_json(assignment_view(impl->store, req.get_param_value("rater"))),
                            "application/json");
        } catch (const ValidationError& e) {
            send_error(res, 404, e.what());
        }
    });

    server.Get(R"(/api/audio/(.+))", [impl](const httplib::Request& req, httplib::Response& res) {
        const auto* sample = impl->store.study().find(req.matches[1].str());
        if (!sample || sample->audio.empty()) return send_error(res, 404, "unknown sample");
        std::ifstream in(sample->audio, std::ios::binary);
        if (!in) return send_error(res, 500, "audio file is unreadable");
        std::stringstream buf;
        buf << in.rdbuf();
        res.set_content(buf.str(), content_type_for(sample->audio));
    });

    server.Post("/api/rating", [impl](const httplib::Request& req, httplib::Response& res) {
        try {
            RatingRecord record = rating_from_json(req.body);
            // Clients do not set timestamps; the server clock orders submissions.
            record.timestamp = 0;
            const auto ack = record_rating(impl->store, record);
            res.set_content(nlohmann::json{{"ok", true}, {"sequence", ack.sequence}}.dump(), "application/json");
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    });

    server.Get("/api/summary", [impl](const httplib::Request&, httplib::Response& res) {
        const auto ratings = impl->store.snapshot();
        if (ratings.empty()) {
            res.set_content(R"({"samples":0,"categories":{}})", "application/json");
            return;
        }
        res.set_content(aggregate_mos(ratings, impl->bootstrap).to_json(), "application/json");
    });

    if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) {
        server.set_mount_point("/", static_dir.string());
    }
}

MosService::~MosService() = default;

bool MosService::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int MosService::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool MosService::listen_after_bind() { return impl_->server.listen_after_bind(); }

void MosService::stop() { impl_->server.stop(); }

void MosService::wait_until_ready() const { impl_->server.wait_until_ready(); }

} // namespace s2seval::mos
