#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "s2seval/moseval.hpp"

namespace s2seval::mos {

// HTTP front end for a rating study:
//   GET  /api/assignments?rater=ID
//   GET  /api/audio/{sample_id}
//   POST /api/rating   {sample_id, rater_id, category, score}
//   GET  /api/summary
// Static files under `static_dir` (the annotation UI) are served at "/".
class MosService {
public:
    MosService(RatingStore& store, stats::BootstrapConfig bootstrap, std::filesystem::path static_dir = {});
    ~MosService();
    MosService(const MosService&) = delete;
    MosService& operator=(const MosService&) = delete;

    // Blocks until stop(). Returns false if the socket could not be bound.
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and returns it, or -1. Call listen_after_bind() next.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace s2seval::mos
