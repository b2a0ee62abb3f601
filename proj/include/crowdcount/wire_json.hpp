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

#ifndef CROWDCOUNT_WIRE_JSON_H_
#define CROWDCOUNT_WIRE_JSON_H_

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "crowdcount/protocol.hpp"
#include "crowdcount/signature.hpp"

namespace crowdcount {

// Wire JSON uses lower_snake_case field names, integer epoch-seconds for
// timestamps, and base64 for binary fields. Object keys are emitted in a
// fixed order so equal values serialize to equal bytes.
using Json = nlohmann::ordered_json;

inline Json MechanismToJson(const MechanismSpec& spec) {
  Json j;
  if (const auto* rr = std::get_if<RandomizedResponseSpec>(&spec)) {
    j["type"] = "randomized_response";
    j["p"] = rr->coins.p();
    j["q"] = rr->coins.q();
  } else {
    const auto& laplace = std::get<LaplaceSpec>(spec);
    j["type"] = "laplace";
    j["epsilon"] = laplace.epsilon();
    j["sensitivity"] = laplace.sensitivity();
  }
  return j;
}

inline MechanismSpec MechanismFromJson(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "randomized_response") {
    return RandomizedResponseSpec{
        CoinPair(j.at("p").get<double>(), j.at("q").get<double>())};
  }
  if (type == "laplace") {
    return LaplaceSpec(j.at("epsilon").get<double>(),
                       j.value("sensitivity", 1.0));
  }
  throw std::invalid_argument("unknown mechanism type '" + type + "'");
}

inline Json QueryToJson(const Query& query) {
  Json j;
  j["query_id"] = query.query_id;
  j["analyst_id"] = query.analyst_id;
  j["poi_id"] = query.poi_id;
  j["start_time"] = query.start_time;
  j["end_time"] = query.end_time;
  j["epoch_length"] = query.epoch_length;
  j["mechanism"] = MechanismToJson(query.mechanism);
  return j;
}

inline Query QueryFromJson(const Json& j) {
  Query query;
  query.query_id = j.at("query_id").get<std::string>();
  query.analyst_id = j.at("analyst_id").get<std::string>();
  query.poi_id = j.at("poi_id").get<std::string>();
  query.start_time = j.at("start_time").get<std::int64_t>();
  query.end_time = j.at("end_time").get<std::int64_t>();
  query.epoch_length = j.at("epoch_length").get<std::int64_t>();
  query.mechanism = MechanismFromJson(j.at("mechanism"));
  return query;
}

inline Json SignedQueryToJson(const SignedQuery& signed_query) {
  Json j;
  j["query"] = QueryToJson(signed_query.query);
  j["public_key_id"] = signed_query.public_key_id;
  j["signature"] = Base64Encode(signed_query.signature);
  return j;
}

inline SignedQuery SignedQueryFromJson(const Json& j) {
  SignedQuery signed_query;
  signed_query.query = QueryFromJson(j.at("query"));
  signed_query.public_key_id = j.at("public_key_id").get<std::string>();
  signed_query.signature = Base64Decode(j.at("signature").get<std::string>());
  return signed_query;
}

inline Json ResponseToJson(const Response& response) {
  Json j;
  j["query_id"] = response.query_id;
  j["epoch_index"] = response.epoch_index;
  Json payload;
  if (const auto* bit = std::get_if<BitPayload>(&response.payload)) {
    payload["bit"] = static_cast<int>(bit->bit);
  } else {
    payload["real"] = std::get<RealPayload>(response.payload).value;
  }
  j["payload"] = payload;
  j["nonce"] = Base64Encode(response.nonce);
  return j;
}

inline Response ResponseFromJson(const Json& j) {
  Response response;
  response.query_id = j.at("query_id").get<std::string>();
  response.epoch_index = j.at("epoch_index").get<std::int64_t>();
  const Json& payload = j.at("payload");
  if (payload.contains("bit")) {
    int bit = payload.at("bit").get<int>();
    if (bit != 0 && bit != 1) {
      throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                          "bit payload must be 0 or 1");
    }
    response.payload = BitPayload{static_cast<std::uint8_t>(bit)};
  } else if (payload.contains("real")) {
    response.payload = RealPayload{payload.at("real").get<double>()};
  } else {
    throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                        "payload must carry either 'bit' or 'real'");
  }
  std::vector<std::uint8_t> nonce = Base64Decode(j.at("nonce").get<std::string>());
  if (nonce.size() != response.nonce.size()) {
    throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                        "nonce must decode to exactly 16 bytes");
  }
  std::copy(nonce.begin(), nonce.end(), response.nonce.begin());
  return response;
}

inline Json EstimateToJson(const EstimateResult& estimate) {
  Json j;
  j["y_a_raw"] = estimate.y_a_raw;
  j["y_a_clamped"] = estimate.y_a_clamped;
  j["std_plugin"] = estimate.std_plugin;
  j["ci95_low"] = estimate.ci95_low;
  j["ci95_high"] = estimate.ci95_high;
  return j;
}

inline EstimateResult EstimateFromJson(const Json& j) {
  EstimateResult estimate;
  estimate.y_a_raw = j.at("y_a_raw").get<double>();
  estimate.y_a_clamped = j.at("y_a_clamped").get<double>();
  estimate.std_plugin = j.at("std_plugin").get<double>();
  estimate.ci95_low = j.at("ci95_low").get<double>();
  estimate.ci95_high = j.at("ci95_high").get<double>();
  return estimate;
}

inline Json AggregateToJson(const EpochAggregate& aggregate) {
  Json j;
  j["query_id"] = aggregate.query_id;
  j["epoch_index"] = aggregate.epoch_index;
  j["n_responses"] = aggregate.n_responses;
  j["raw_sum"] = aggregate.raw_sum;
  j["estimate"] =
      aggregate.estimate ? EstimateToJson(*aggregate.estimate) : Json(nullptr);
  j["noisy_count"] = aggregate.noisy_count ? Json(*aggregate.noisy_count) : Json(nullptr);
  j["closed"] = aggregate.closed;
  return j;
}

inline EpochAggregate AggregateFromJson(const Json& j) {
  EpochAggregate aggregate;
  aggregate.query_id = j.at("query_id").get<std::string>();
  aggregate.epoch_index = j.at("epoch_index").get<std::int64_t>();
  aggregate.n_responses = j.at("n_responses").get<std::int64_t>();
  aggregate.raw_sum = j.at("raw_sum").get<double>();
  if (j.contains("estimate") && !j.at("estimate").is_null()) {
    aggregate.estimate = EstimateFromJson(j.at("estimate"));
  }
  if (j.contains("noisy_count") && !j.at("noisy_count").is_null()) {
    aggregate.noisy_count = j.at("noisy_count").get<double>();
  }
  aggregate.closed = j.at("closed").get<bool>();
  return aggregate;
}

inline Json KeyringToJson(const Keyring& keyring) {
  Json j = Json::array();
  for (const auto& entry : keyring.entries()) {
    Json e;
    e["analyst_id"] = entry.analyst_id;
    e["public_key_id"] = entry.public_key_id;
    e["public_key_base64"] = Base64Encode(entry.public_key);
    j.push_back(e);
  }
  return j;
}

inline Keyring KeyringFromJson(const Json& j) {
  Keyring keyring;
  for (const Json& e : j) {
    KeyringEntry entry;
    entry.analyst_id = e.at("analyst_id").get<std::string>();
    entry.public_key_id = e.at("public_key_id").get<std::string>();
    std::vector<std::uint8_t> key =
        Base64Decode(e.at("public_key_base64").get<std::string>());
    if (key.size() != entry.public_key.size()) {
      throw std::invalid_argument("public key must decode to 32 bytes");
    }
    std::copy(key.begin(), key.end(), entry.public_key.begin());
    keyring.Add(std::move(entry));
  }
  return keyring;
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_WIRE_JSON_H_
