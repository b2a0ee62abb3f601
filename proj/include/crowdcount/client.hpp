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

#ifndef CROWDCOUNT_CLIENT_H_
#define CROWDCOUNT_CLIENT_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>

#include "crowdcount/protocol.hpp"
#include "crowdcount/wire_json.hpp"

namespace crowdcount {

// The HTTP service is unreachable or answered outside the protocol.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// HTTP client implementing the aggregator transport. Protocol-level
// rejections are surfaced as the same ProtocolError the in-process
// aggregator throws, decoded from the service's error body.
class HttpAggregatorClient final : public AggregatorTransport {
 public:
  HttpAggregatorClient(const std::string& host, int port) : client_(host, port) {
    client_.set_keep_alive(true);
  }

  std::string RegisterQuery(const SignedQuery& signed_query,
                            std::int64_t now) override {
    auto res = client_.Post("/queries?now=" + std::to_string(now),
                            SignedQueryToJson(signed_query).dump(),
                            "application/json");
    Json body = Require(res, 201);
    return body.at("query_id").get<std::string>();
  }

  std::vector<SignedQuery> FetchQueries(std::int64_t now) override {
    auto res = client_.Get("/queries?now=" + std::to_string(now));
    Json body = Require(res, 200);
    std::vector<SignedQuery> queries;
    for (const Json& item : body) {
      queries.push_back(SignedQueryFromJson(item));
    }
    return queries;
  }

  void SubmitResponse(const Response& response) override {
    auto res = client_.Post("/responses", ResponseToJson(response).dump(),
                            "application/json");
    Require(res, 202);
  }

  EpochAggregate CloseEpoch(const std::string& query_id, std::int64_t epoch_index,
                            std::int64_t now) override {
    auto res = client_.Post("/epochs/" + query_id + "/" +
                                std::to_string(epoch_index) + "/close?now=" +
                                std::to_string(now),
                            "", "application/json");
    return AggregateFromJson(Require(res, 200));
  }

  EpochAggregate Aggregate(const std::string& query_id,
                           std::int64_t epoch_index) override {
    auto res = client_.Get("/aggregates/" + query_id + "/" +
                           std::to_string(epoch_index));
    return AggregateFromJson(Require(res, 200));
  }

 private:
  static ProtocolStatus StatusByName(const std::string& name) {
    static const ProtocolStatus kAll[] = {
        ProtocolStatus::kInvalidSignature, ProtocolStatus::kUnknownAnalyst,
        ProtocolStatus::kExpiredQuery,     ProtocolStatus::kMalformedQuery,
        ProtocolStatus::kUnknownQuery,     ProtocolStatus::kEpochOutOfRange,
        ProtocolStatus::kEpochClosed,      ProtocolStatus::kEpochStillOpen,
        ProtocolStatus::kDuplicateNonce,   ProtocolStatus::kPayloadMismatch,
        ProtocolStatus::kAggregateNotFound};
    for (ProtocolStatus status : kAll) {
      if (name == ProtocolStatusName(status)) {
        return status;
      }
    }
    throw TransportError("unrecognized error name '" + name + "'");
  }

  static Json Require(const httplib::Result& res, int expected_status) {
    if (!res) {
      throw TransportError("request failed: " + httplib::to_string(res.error()));
    }
    Json body;
    if (!res->body.empty()) {
      body = Json::parse(res->body, nullptr, /*allow_exceptions=*/false);
      if (body.is_discarded()) {
        throw TransportError("response is not valid JSON");
      }
    }
    if (res->status == expected_status) {
      return body;
    }
    if (body.is_object() && body.contains("error")) {
      throw ProtocolError(StatusByName(body.at("error").get<std::string>()),
                          body.value("message", std::string("(no message)")));
    }
    throw TransportError("unexpected HTTP status " + std::to_string(res->status));
  }

  httplib::Client client_;
};

}  // namespace crowdcount

#endif  // CROWDCOUNT_CLIENT_H_
