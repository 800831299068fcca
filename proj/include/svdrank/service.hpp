// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// HTTP annotation service: sessions, warm-up playback, task issuance and
// label persistence.
//
// Session state lives in a JSON store file rewritten atomically after every
// mutation, so an interrupted session resumes after a restart. Accepted
// labels are appended to a JSON-lines file, one write(2) per record.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "svdrank/dataset.hpp"
#include "svdrank/error.hpp"
#include "svdrank/experiment.hpp"
#include "svdrank/rng.hpp"

namespace svdrank {

inline constexpr std::size_t kWarmupCount = 10;

// Error with the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct IssuedTask {
  std::string task_id;
  std::vector<std::string> utterances;  // one for ACR; (i, j) for CCR
  bool answered = false;
};

struct AnnotationSession {
  std::string session_id;
  std::string annotator_id;
  std::string svd_id;
  TrainMode mode = TrainMode::ccr;
  bool warmup_done = false;
  std::vector<std::string> warmup;  // empty until issued
  std::vector<IssuedTask> tasks;    // issue order
};

inline const std::vector<std::string>& acr_scale_captions() {
  static const std::vector<std::string> c = {"1: not so", "2", "3", "4", "5: so"};
  return c;
}

inline nlohmann::json ccr_options_json() {
  return nlohmann::json::array({{{"value", "i_more"}, {"caption", "i is more so"}},
                                {{"value", "i_little"}, {"caption", "i is a little more so"}},
                                {{"value", "j_little"}, {"caption", "j is a little more so"}},
                                {{"value", "j_more"}, {"caption", "j is more so"}}});
}

class AnnotationService {
 public:
  AnnotationService(Corpus corpus, std::filesystem::path data_dir,
                    std::filesystem::path labels_path, std::filesystem::path store_path,
                    std::uint64_t seed = 0)
      : corpus_(std::move(corpus)),
        data_dir_(std::move(data_dir)),
        labels_path_(std::move(labels_path)),
        store_path_(std::move(store_path)),
        seed_(seed) {
    load_store();
  }

  nlohmann::json new_session(const std::string& annotator, const std::string& svd_id,
                             const std::string& mode) {
    if (annotator.empty() || svd_id.empty())
      throw ServiceError(400, "annotator and svd are required");
    TrainMode m;
    try {
      m = parse_mode(mode);
    } catch (const ConfigError& e) {
      throw ServiceError(400, e.what());
    }
    std::lock_guard lock(mu_);
    AnnotationSession s;
    s.session_id = "s" + std::to_string(++session_counter_);
    s.annotator_id = annotator;
    s.svd_id = svd_id;
    s.mode = m;
    s.warmup_done = warmed_.count({annotator, svd_id}) > 0;
    sessions_[s.session_id] = s;
    save_store();
    return session_json(s);
  }

  // Ten distinct in-scope utterances; repeated calls return the same list.
  nlohmann::json warmup(const std::string& session_id) {
    std::lock_guard lock(mu_);
    AnnotationSession& s = session(session_id);
    if (s.warmup.empty()) {
      auto idx = corpus_.in_scope_indices(svd_from_id(s.svd_id).gender_scope);
      if (idx.size() < kWarmupCount)
        throw ServiceError(422, "corpus has only " + std::to_string(idx.size()) +
                                    " eligible utterances; warm-up needs 10");
      Rng rng = session_rng(s, 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t k = 0; k < kWarmupCount; ++k) s.warmup.push_back(corpus_[idx[k]].id);
      save_store();
    }
    nlohmann::json j;
    j["session_id"] = s.session_id;
    j["utterances"] = utterance_refs(s.warmup);
    return j;
  }

  nlohmann::json complete_warmup(const std::string& session_id) {
    std::lock_guard lock(mu_);
    AnnotationSession& s = session(session_id);
    if (!s.warmup_done) {
      if (s.warmup.empty()) throw ServiceError(409, "warm-up has not been issued");
      s.warmup_done = true;
      warmed_.insert({s.annotator_id, s.svd_id});
      save_store();
    }
    return session_json(s);
  }

  // Returns the outstanding task if one exists, otherwise issues a new one.
  nlohmann::json task(const std::string& session_id) {
    std::lock_guard lock(mu_);
    AnnotationSession& s = session(session_id);
    if (!s.warmup_done) throw ServiceError(409, "warm-up not completed");
    if (s.tasks.empty() || s.tasks.back().answered) {
      IssuedTask t;
      t.task_id = s.session_id + "-t" + std::to_string(s.tasks.size() + 1);
      Rng rng = session_rng(s, s.tasks.size() + 1);
      const Svd svd = svd_from_id(s.svd_id);
      if (s.mode == TrainMode::ccr) {
        try {
          auto [i, j] = sample_ccr_pair(corpus_, svd, rng);
          t.utterances = {i, j};
        } catch (const ConfigError& e) {
          throw ServiceError(422, e.what());
        }
      } else {
        const auto idx = corpus_.in_scope_indices(svd.gender_scope);
        if (idx.empty()) throw ServiceError(422, "no utterance in scope for " + s.svd_id);
        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        t.utterances = {corpus_[idx[pick(rng)]].id};
      }
      s.tasks.push_back(std::move(t));
      save_store();
    }
    return task_json(s, s.tasks.back());
  }

  // Validates and appends one label. A task can be answered once.
  nlohmann::json submit_label(const std::string& session_id, const std::string& task_id,
                              const nlohmann::json& payload) {
    std::lock_guard lock(mu_);
    AnnotationSession& s = session(session_id);
    if (!s.warmup_done) throw ServiceError(409, "warm-up not completed");
    auto it = std::find_if(s.tasks.begin(), s.tasks.end(),
                           [&](const IssuedTask& t) { return t.task_id == task_id; });
    if (it == s.tasks.end())
      throw ServiceError(404, "task \"" + task_id + "\" was not issued to this session");
    if (it->answered) throw ServiceError(409, "task \"" + task_id + "\" already answered");

    nlohmann::json record;
    if (s.mode == TrainMode::acr) {
      if (!payload.is_number_integer())
        throw ServiceError(400, "ACR payload must be an integer rating 1-5");
      AcrLabel l{s.svd_id, s.annotator_id, it->utterances.at(0), payload.get<int>()};
      try {
        validate(l, corpus_);
      } catch (const ValidationError& e) {
        throw ServiceError(400, e.what());
      }
      record = to_json(l);
    } else {
      if (!payload.is_string())
        throw ServiceError(400, "CCR payload must be one of i_more, i_little, j_little, j_more");
      const auto choice = parse_choice(payload.get<std::string>());
      if (!choice)
        throw ServiceError(400, "invalid CCR choice \"" + payload.get<std::string>() +
                                    "\"; forced choice allows i_more, i_little, j_little, j_more");
      CcrLabel l{s.svd_id, s.annotator_id, it->utterances.at(0), it->utterances.at(1), *choice};
      validate(l, corpus_);
      record = to_json(l);
    }
    append_line(record.dump());
    it->answered = true;
    save_store();
    return record;
  }

  // Original WAVE bytes of an audio-backed utterance.
  std::string audio_bytes(const std::string& utt) const {
    const Utterance* u = corpus_.find(utt);
    if (!u || u->source_kind != SourceKind::audio)
      throw ServiceError(404, "no audio for utterance \"" + utt + "\"");
    std::filesystem::path p(u->source_path);
    if (p.is_relative()) p = data_dir_ / p;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ServiceError(404, "audio file missing for \"" + utt + "\"");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  void bind(httplib::Server& srv) {
    auto guard = [](httplib::Response& res, const std::function<nlohmann::json()>& fn) {
      try {
        res.set_content(fn().dump(), "application/json");
      } catch (const ServiceError& e) {
        res.status = e.status();
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    };
    srv.Get("/api/session/new", [this, guard](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        return new_session(req.get_param_value("annotator"), req.get_param_value("svd"),
                           req.get_param_value("mode"));
      });
    });
    srv.Get(R"(/api/session/([^/]+)/warmup)",
            [this, guard](const httplib::Request& req, httplib::Response& res) {
              guard(res, [&] { return warmup(req.matches[1]); });
            });
    srv.Post(R"(/api/session/([^/]+)/warmup/done)",
             [this, guard](const httplib::Request& req, httplib::Response& res) {
               guard(res, [&] { return complete_warmup(req.matches[1]); });
             });
    srv.Get(R"(/api/session/([^/]+)/task)",
            [this, guard](const httplib::Request& req, httplib::Response& res) {
              guard(res, [&] { return task(req.matches[1]); });
            });
    srv.Post(R"(/api/session/([^/]+)/label)",
             [this, guard](const httplib::Request& req, httplib::Response& res) {
               guard(res, [&] {
                 nlohmann::json body;
                 try {
                   body = nlohmann::json::parse(req.body);
                 } catch (const nlohmann::json::exception&) {
                   throw ServiceError(400, "request body is not valid JSON");
                 }
                 if (!body.is_object() || !body.contains("task_id") ||
                     !body["task_id"].is_string() || !body.contains("payload"))
                   throw ServiceError(400, "body must be {task_id, payload}");
                 return submit_label(req.matches[1], body["task_id"].get<std::string>(),
                                     body["payload"]);
               });
             });
    srv.Get(R"(/audio/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(audio_bytes(req.matches[1]), "audio/wav");
      } catch (const ServiceError& e) {
        res.status = e.status();
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }

 private:
  AnnotationSession& session(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session \"" + id + "\"");
    return it->second;
  }

  Rng session_rng(const AnnotationSession& s, std::uint64_t stream) const {
    return make_rng(derive_seed(seed_, std::hash<std::string>{}(s.session_id)), stream);
  }

  nlohmann::json utterance_refs(const std::vector<std::string>& ids) const {
    auto arr = nlohmann::json::array();
    for (const auto& id : ids) arr.push_back({{"id", id}, {"audio", "/audio/" + id}});
    return arr;
  }

  nlohmann::json session_json(const AnnotationSession& s) const {
    return {{"session_id", s.session_id},
            {"annotator", s.annotator_id},
            {"svd", s.svd_id},
            {"mode", std::string(mode_name(s.mode))},
            {"warmup_done", s.warmup_done}};
  }

  nlohmann::json task_json(const AnnotationSession& s, const IssuedTask& t) const {
    nlohmann::json j;
    j["task_id"] = t.task_id;
    j["mode"] = std::string(mode_name(s.mode));
    j["utterances"] = utterance_refs(t.utterances);
    if (s.mode == TrainMode::ccr)
      j["options"] = ccr_options_json();
    else
      j["options"] = acr_scale_captions();
    return j;
  }

  void append_line(const std::string& line) {
    std::lock_guard lock(write_mu_);
    const int fd = ::open(labels_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw ServiceError(500, "cannot open label file " + labels_path_.string());
    const std::string rec = line + "\n";
    const ssize_t n = ::write(fd, rec.data(), rec.size());
    ::fsync(fd);
    ::close(fd);
    if (n != static_cast<ssize_t>(rec.size()))
      throw ServiceError(500, "short write to label file");
  }

  void save_store() const {
    nlohmann::json j;
    j["session_counter"] = session_counter_;
    auto warmed = nlohmann::json::array();
    for (const auto& [a, svd] : warmed_) warmed.push_back({a, svd});
    j["warmed"] = warmed;
    auto sessions = nlohmann::json::object();
    for (const auto& [id, s] : sessions_) {
      auto tasks = nlohmann::json::array();
      for (const auto& t : s.tasks)
        tasks.push_back({{"task_id", t.task_id}, {"utterances", t.utterances},
                         {"answered", t.answered}});
      sessions[id] = {{"annotator", s.annotator_id}, {"svd", s.svd_id},
                      {"mode", std::string(mode_name(s.mode))},
                      {"warmup_done", s.warmup_done}, {"warmup", s.warmup},
                      {"tasks", tasks}};
    }
    j["sessions"] = sessions;
    const auto tmp = store_path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump() << '\n';
      if (!out) throw ServiceError(500, "cannot write session store");
    }
    std::filesystem::rename(tmp, store_path_);
  }

  void load_store() {
    if (!std::filesystem::exists(store_path_)) return;
    std::ifstream in(store_path_);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      session_counter_ = j.at("session_counter").get<std::uint64_t>();
      for (const auto& w : j.at("warmed"))
        warmed_.insert({w.at(0).get<std::string>(), w.at(1).get<std::string>()});
      for (const auto& [id, sj] : j.at("sessions").items()) {
        AnnotationSession s;
        s.session_id = id;
        s.annotator_id = sj.at("annotator").get<std::string>();
        s.svd_id = sj.at("svd").get<std::string>();
        s.mode = parse_mode(sj.at("mode").get<std::string>());
        s.warmup_done = sj.at("warmup_done").get<bool>();
        s.warmup = sj.at("warmup").get<std::vector<std::string>>();
        for (const auto& tj : sj.at("tasks"))
          s.tasks.push_back({tj.at("task_id").get<std::string>(),
                             tj.at("utterances").get<std::vector<std::string>>(),
                             tj.at("answered").get<bool>()});
        sessions_[id] = std::move(s);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("session store " + store_path_.string() + ": " + e.what());
    }
  }

  Corpus corpus_;
  std::filesystem::path data_dir_;
  std::filesystem::path labels_path_;
  std::filesystem::path store_path_;
  std::uint64_t seed_;

  std::mutex mu_;
  std::mutex write_mu_;
  std::uint64_t session_counter_ = 0;
  std::map<std::string, AnnotationSession> sessions_;
  std::set<std::pair<std::string, std::string>> warmed_;  // (annotator, svd)
};

}  // namespace svdrank
