#pragma once

// Transcript-driven backend: replays recorded completions in order, and a
// recording decorator that captures live completions into the same format.
// Transcript files are JSONL; each line holds {"key", "request", "reply"}.
// Hand-written transcripts may omit key and request (reply-only lines replay
// unconditionally in order), and a reply may be a bare string as shorthand
// for an assistant message.

#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/backend.hpp"

namespace gridai {

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(const std::string& transcript_path) {
    std::ifstream in(transcript_path, std::ios::binary);
    if (!in) {
      load_error_ = "cannot open transcript: " + transcript_path;
      return;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object() || !doc.contains("reply")) {
        load_error_ = "transcript line " + std::to_string(line_no) + " is not a reply record";
        return;
      }
      Entry entry;
      if (doc.contains("key") && doc["key"].is_string())
        entry.key = doc["key"].get<std::string>();
      const auto& reply = doc["reply"];
      if (reply.is_string()) {
        entry.reply = Message::assistant(reply.get<std::string>());
      } else {
        auto parsed = message_from_json(reply);
        if (!parsed) {
          load_error_ = "transcript line " + std::to_string(line_no) + " has a malformed reply";
          return;
        }
        entry.reply = *parsed;
      }
      entries_.push_back(std::move(entry));
    }
  }

  std::string name() const override { return "replay"; }

  std::size_t remaining() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size() - cursor_;
  }

  CompletionResult complete(const Conversation& conv,
                            const std::vector<ToolSchema>& tools) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (load_error_) return BackendError{BackendErrorKind::backend_unavailable, *load_error_};
    if (cursor_ >= entries_.size()) {
      BackendError err{BackendErrorKind::replay_mismatch,
                       "transcript exhausted at turn " + std::to_string(cursor_)};
      err.turn = static_cast<int>(cursor_);
      return err;
    }
    const Entry& entry = entries_[cursor_];
    if (entry.key) {
      std::string key = request_key(conv, tools);
      if (key != *entry.key) {
        BackendError err{BackendErrorKind::replay_mismatch,
                         "turn " + std::to_string(cursor_) + " diverges: transcript key " +
                             *entry.key + ", live request key " + key};
        err.turn = static_cast<int>(cursor_);
        return err;
      }
    }
    ++cursor_;
    return entry.reply;
  }

 private:
  struct Entry {
    std::optional<std::string> key;
    Message reply = Message::assistant("");
  };

  std::vector<Entry> entries_;
  std::size_t cursor_ = 0;
  std::optional<std::string> load_error_;
  mutable std::mutex mu_;
};

class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, const std::string& transcript_path)
      : inner_(std::move(inner)),
        out_(transcript_path, std::ios::binary | std::ios::app) {
    if (!out_) write_error_ = "cannot open transcript for writing: " + transcript_path;
  }

  std::string name() const override { return inner_->name() + "+record"; }

  CompletionResult complete(const Conversation& conv,
                            const std::vector<ToolSchema>& tools) override {
    if (write_error_) return BackendError{BackendErrorKind::backend_unavailable, *write_error_};
    CompletionResult result = inner_->complete(conv, tools);
    if (const auto* reply = std::get_if<Message>(&result)) {
      nlohmann::json record;
      record["key"] = request_key(conv, tools);
      record["request"] = normalize_request(conv, tools);
      record["reply"] = message_to_json(*reply);
      std::lock_guard<std::mutex> lock(mu_);
      out_ << record.dump() << "\n";
      out_.flush();
    }
    return result;
  }

 private:
  std::shared_ptr<Backend> inner_;
  std::ofstream out_;
  std::optional<std::string> write_error_;
  std::mutex mu_;
};

}  // namespace gridai
