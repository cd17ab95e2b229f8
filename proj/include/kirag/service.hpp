#pragma once

#include <memory>
#include <string>

#include "kirag/config.hpp"

namespace kirag {

/// Read-only HTTP front end over a loaded engine.
///   POST /retrieve {"question", "k"?} -> {"documents", "chain", "iterations"}
///   POST /answer   {"question", "k"?} -> {"answer", "documents"}
///   GET  /healthz                     -> {"status": "ok"}
/// Malformed requests get 400 with a message; pipeline failures get 500 with
/// an opaque id while details go to the log. The payload shape matches the
/// retrieve CLI output byte for byte.
class RetrievalService {
public:
    explicit RetrievalService(Engine& engine);
    ~RetrievalService();
    RetrievalService(const RetrievalService&) = delete;
    RetrievalService& operator=(const RetrievalService&) = delete;

    /// Binds and serves on a background thread. port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host, int port);

    /// Binds and serves on the calling thread until stop() or a signal.
    void run(const std::string& host, int port);

    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace kirag
