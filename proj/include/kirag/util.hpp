#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace kirag {

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

// Collapses runs of whitespace to single spaces and trims the ends.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading whitespace dropped
    for (char c : s) {
        bool ws = (c == ' ' || c == '\t' || c == '\r' || c == '\n');
        if (ws) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            out.push_back(c);
            in_space = false;
        }
    }
    return out;
}

// Canonical key used wherever two pieces of text are compared for identity:
// case-folded, internal whitespace collapsed, trimmed. Punctuation is kept.
inline std::string normalized_key(std::string_view s) {
    return collapse_whitespace(to_lower(s));
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

/// Lowercased whitespace tokens with non-alphanumeric ASCII trimmed off the
/// edges, so "<boston;" and "boston" agree. Bytes >= 128 are kept.
inline std::vector<std::string> tokenize_simple(std::string_view s) {
    auto keep_edge = [](unsigned char c) { return c >= 128 || std::isalnum(c) != 0; };
    std::vector<std::string> tokens;
    for (auto& raw : split_whitespace(s)) {
        size_t b = 0, e = raw.size();
        while (b < e && !keep_edge(static_cast<unsigned char>(raw[b]))) ++b;
        while (e > b && !keep_edge(static_cast<unsigned char>(raw[e - 1]))) --e;
        if (b == e) continue;
        std::string tok = raw.substr(b, e - b);
        for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, splitmix64) for cache keys, config fingerprints and the
// deterministic hash embedder. Not cryptographic.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<LogLevel>& log_level() {
    static std::atomic<LogLevel> level{LogLevel::Warn};
    return level;
}

inline void set_log_level(LogLevel l) { log_level().store(l); }

inline void log_message(LogLevel l, const std::string& msg) {
    if (l < log_level().load()) return;
    const char* tag = l == LogLevel::Debug  ? "debug"
                      : l == LogLevel::Info ? "info"
                      : l == LogLevel::Warn ? "warn"
                                            : "error";
    std::cerr << "[kirag] " << tag << ": " << msg << "\n";
}

inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::Error, msg); }

// ---------------------------------------------------------------------------
// Bounded parallel map: runs fn(i) for i in [0, n) on `threads` workers.
// Exceptions from workers are rethrown on the calling thread (first one wins).
// ---------------------------------------------------------------------------

inline void parallel_for(size_t n, unsigned threads, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load()) {
            size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                break;
            }
        }
    };
    unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace kirag
