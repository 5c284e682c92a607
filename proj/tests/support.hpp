// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/llm_gateway.hpp"

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace testgenie::testing {

inline std::filesystem::path fixtures() { return TESTGENIE_TEST_FIXTURES; }
inline std::filesystem::path data_dir() { return TESTGENIE_TEST_DATA; }
inline std::filesystem::path vocabulary() { return data_dir() / "cl100k_base.tiktoken"; }
inline bool have_vocabulary() { return std::filesystem::exists(vocabulary()); }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + p.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("testgenie-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Replies from a queue; the last reply repeats once the queue is drained.
class ScriptedChat : public ChatClient {
public:
    explicit ScriptedChat(std::deque<std::string> replies) : replies_(std::move(replies)) {}

    ChatResult complete(const ChatHistory& history, const ModelProfile&) override {
        std::lock_guard lock(mutex_);
        seen_.push_back(history);
        if (fail_next_ > 0) {
            --fail_next_;
            throw TransportError("scripted failure");
        }
        std::string text = replies_.front();
        if (replies_.size() > 1) {
            replies_.pop_front();
        }
        return {text, Usage{100, 10, 0.01, true}};
    }

    void fail_next(int n) { fail_next_ = n; }
    std::vector<ChatHistory> seen() const {
        std::lock_guard lock(mutex_);
        return seen_;
    }

private:
    mutable std::mutex mutex_;
    std::deque<std::string> replies_;
    std::vector<ChatHistory> seen_;
    int fail_next_ = 0;
};

} // namespace testgenie::testing
