//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CROWDCOUNT_SERVICE_H_
#define CROWDCOUNT_SERVICE_H_

#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>

#include "crowdcount/csv.hpp"
#include "crowdcount/protocol.hpp"
#include "crowdcount/wire_json.hpp"

namespace crowdcount {

inline int HttpStatusFor(ProtocolStatus status) {
  switch (status) {
    case ProtocolStatus::kMalformedQuery: return 400;
    case ProtocolStatus::kInvalidSignature: return 401;
    case ProtocolStatus::kUnknownAnalyst: return 401;
    case ProtocolStatus::kUnknownQuery: return 404;
    case ProtocolStatus::kAggregateNotFound: return 404;
    case ProtocolStatus::kExpiredQuery: return 409;
    case ProtocolStatus::kEpochClosed: return 409;
    case ProtocolStatus::kEpochStillOpen: return 409;
    case ProtocolStatus::kDuplicateNonce: return 409;
    case ProtocolStatus::kEpochOutOfRange: return 422;
    case ProtocolStatus::kPayloadMismatch: return 422;
  }
  return 500;
}

struct ServiceConfig {
  Keyring keyring;
  AggregatorOptions aggregator_options{.grace_epochs = 1, .noise_seed = 0};
  std::optional<std::string> snapshot_path;
};

// HTTP face of the aggregator. Handlers delegate to the Aggregator, which
// owns all synchronization; httplib serves requests from a thread pool.
class AggregatorService {
 public:
  explicit AggregatorService(ServiceConfig config)
      : snapshot_path_(std::move(config.snapshot_path)),
        aggregator_(std::move(config.keyring), config.aggregator_options) {
    RegisterRoutes();
  }

  Aggregator& aggregator() { return aggregator_; }

  // Binds to an OS-assigned port; pair with ListenAfterBind on a thread.
  int BindToAnyPort(const std::string& host) {
    return server_.bind_to_any_port(host);
  }

  bool ListenAfterBind() { return server_.listen_after_bind(); }

  // Blocking; returns false if the address cannot be bound.
  bool Listen(const std::string& host, int port) {
    return server_.listen(host, port);
  }

  // Stops accepting requests; safe to call from another thread. Snapshot
  // writing is left to the caller once Listen has returned.
  void Stop() { server_.stop(); }

  bool IsRunning() const { return server_.is_running(); }

  void WaitUntilReady() const { server_.wait_until_ready(); }

  // Dumps registered queries and closed aggregates when a snapshot path is
  // configured.
  void WriteSnapshot() {
    if (!snapshot_path_) {
      return;
    }
    Json snapshot;
    Json queries = Json::array();
    for (const SignedQuery& sq : aggregator_.RegisteredQueries()) {
      queries.push_back(SignedQueryToJson(sq));
    }
    snapshot["queries"] = std::move(queries);
    Json aggregates = Json::array();
    for (const EpochAggregate& aggregate : aggregator_.ClosedAggregates()) {
      aggregates.push_back(AggregateToJson(aggregate));
    }
    snapshot["closed_aggregates"] = std::move(aggregates);
    std::ofstream out(*snapshot_path_);
    out << snapshot.dump(2) << '\n';
  }

 private:
  static std::int64_t NowParam(const httplib::Request& req) {
    if (req.has_param("now")) {
      return ParseInt64(req.get_param_value("now"));
    }
    return static_cast<std::int64_t>(std::time(nullptr));
  }

  static void WriteJson(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void WriteError(httplib::Response& res, const ProtocolError& error) {
    Json body;
    body["error"] = ProtocolStatusName(error.status());
    body["message"] = error.what();
    WriteJson(res, HttpStatusFor(error.status()), body);
  }

  template <typename Handler>
  static void Guarded(httplib::Response& res, Handler&& handler) {
    try {
      handler();
    } catch (const ProtocolError& error) {
      WriteError(res, error);
    } catch (const Json::exception& error) {
      Json body;
      body["error"] = "MalformedRequest";
      body["message"] = error.what();
      WriteJson(res, 400, body);
    } catch (const std::invalid_argument& error) {
      Json body;
      body["error"] = "MalformedRequest";
      body["message"] = error.what();
      WriteJson(res, 400, body);
    }
  }

  void RegisterRoutes() {
    server_.Post("/queries", [this](const httplib::Request& req, httplib::Response& res) {
      Guarded(res, [&] {
        SignedQuery signed_query = SignedQueryFromJson(Json::parse(req.body));
        std::string id = aggregator_.RegisterQuery(signed_query, NowParam(req));
        Json body;
        body["query_id"] = id;
        WriteJson(res, 201, body);
      });
    });

    server_.Get("/queries", [this](const httplib::Request& req, httplib::Response& res) {
      Guarded(res, [&] {
        Json body = Json::array();
        for (const SignedQuery& sq : aggregator_.FetchQueries(NowParam(req))) {
          body.push_back(SignedQueryToJson(sq));
        }
        WriteJson(res, 200, body);
      });
    });

    server_.Post("/responses", [this](const httplib::Request& req, httplib::Response& res) {
      Guarded(res, [&] {
        Response response = ResponseFromJson(Json::parse(req.body));
        aggregator_.SubmitResponse(response);
        Json body;
        body["accepted"] = true;
        WriteJson(res, 202, body);
      });
    });

    server_.Post(R"(/epochs/([^/]+)/(\d+)/close)",
                 [this](const httplib::Request& req, httplib::Response& res) {
      Guarded(res, [&] {
        EpochAggregate aggregate = aggregator_.CloseEpoch(
            req.matches[1].str(), ParseInt64(req.matches[2].str()), NowParam(req));
        WriteJson(res, 200, AggregateToJson(aggregate));
      });
    });

    server_.Get(R"(/aggregates/([^/]+)/(\d+))",
                [this](const httplib::Request& req, httplib::Response& res) {
      Guarded(res, [&] {
        EpochAggregate aggregate = aggregator_.Aggregate(
            req.matches[1].str(), ParseInt64(req.matches[2].str()));
        WriteJson(res, 200, AggregateToJson(aggregate));
      });
    });
  }

  std::optional<std::string> snapshot_path_;
  Aggregator aggregator_;
  httplib::Server server_;
};

}  // namespace crowdcount

#endif  // CROWDCOUNT_SERVICE_H_
