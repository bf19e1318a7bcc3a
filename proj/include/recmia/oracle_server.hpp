#pragma once

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "recmia/common.hpp"
#include "recmia/recommenders.hpp"

namespace recmia {

// Line-delimited JSON protocol.
//   request:  {"history": [item indices], "n": 10}
//   response: {"items": [item indices], "truncated": false}
//             {"error": "..."} for a rejected request
// The first line the server writes is {"ready": true, "num_items": q}.
inline nlohmann::json answer_request(const RecommendOracle& model, const std::string& line) {
  try {
    const auto req = nlohmann::json::parse(line);
    RecommendRequest r;
    r.history = req.value("history", std::vector<ItemIndex>{});
    r.n = req.at("n").get<std::size_t>();
    const auto list = model.recommend(r);
    return {{"items", list.items}, {"truncated", list.truncated}};
  } catch (const std::exception& e) {
    return {{"error", e.what()}};
  }
}

inline std::size_t serve_oracle(const RecommendOracle& model, std::istream& in, std::ostream& out) {
  out << nlohmann::json{{"ready", true}, {"num_items", model.num_items()}}.dump() << '\n'
      << std::flush;
  std::size_t served = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << answer_request(model, line).dump() << '\n' << std::flush;
    ++served;
  }
  return served;
}

// Talks to `recmia serve-oracle` (or any process speaking the protocol above)
// through its stdin/stdout.
class SubprocessOracle : public RecommendOracle {
 public:
  explicit SubprocessOracle(const std::vector<std::string>& argv) {
    if (argv.empty()) throw Error("SubprocessOracle: empty command");
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error("SubprocessOracle: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("SubprocessOracle: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_ = fdopen(to_child[1], "w");
    read_ = fdopen(from_child[0], "r");
    const auto hello = read_json();
    if (!hello.value("ready", false)) throw Error("oracle process did not report ready");
    num_items_ = hello.at("num_items").get<std::size_t>();
  }

  SubprocessOracle(const SubprocessOracle&) = delete;
  SubprocessOracle& operator=(const SubprocessOracle&) = delete;

  ~SubprocessOracle() override {
    if (write_) std::fclose(write_);
    if (read_) std::fclose(read_);
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
  }

  RecommendationList recommend(const RecommendRequest& req) const override {
    const std::string line =
        nlohmann::json{{"history", req.history}, {"n", req.n}}.dump() + "\n";
    if (std::fputs(line.c_str(), write_) < 0 || std::fflush(write_) != 0)
      throw Error("oracle process closed its input");
    const auto resp = read_json();
    if (resp.contains("error")) throw Error("oracle: " + resp.at("error").get<std::string>());
    RecommendationList out;
    out.items = resp.at("items").get<std::vector<ItemIndex>>();
    out.truncated = resp.value("truncated", false);
    return out;
  }

  std::size_t num_items() const override { return num_items_; }

 private:
  nlohmann::json read_json() const {
    std::string line;
    int c;
    while ((c = std::fgetc(read_)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
    if (line.empty()) throw Error("oracle process exited unexpectedly");
    return nlohmann::json::parse(line);
  }

  pid_t pid_ = -1;
  std::FILE* write_ = nullptr;
  std::FILE* read_ = nullptr;
  std::size_t num_items_ = 0;
};

}  // namespace recmia
