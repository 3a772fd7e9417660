#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "helpers.hpp"
#include "phewas/consensus.hpp"
#include "phewas/remote.hpp"

using namespace phewas;
using Json = nlohmann::ordered_json;

namespace {

// In-process HTTP server bound to an ephemeral port.
struct TestServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port) + path;
  }
  ~TestServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
};

}  // namespace

TEST_CASE("endpoint parsing") {
  auto u = remote::parse_url("http://host:8080/v1/embed");
  CHECK(u.base == "http://host:8080");
  CHECK(u.path == "/v1/embed");
  u = remote::parse_url("https://host");
  CHECK(u.base == "https://host");
  CHECK(u.path == "/");
  CHECK_THROWS_AS(remote::parse_url("host:8080/x"), ValidationError);
}

TEST_CASE("remote embeddings happy path and schema checks") {
  TestServer ts;
  std::atomic<int> hits{0};
  ts.server.Post("/embed", [&](const httplib::Request& req,
                               httplib::Response& res) {
    ++hits;
    const Json body = Json::parse(req.body);
    Json vectors = Json::array();
    for (std::size_t i = 0; i < body.at("texts").size(); ++i)
      vectors.push_back(std::vector<double>{1.0, 0.0, double(i)});
    res.set_content(Json{{"vectors", vectors}}.dump(), "application/json");
  });
  ts.server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(Json{{"vectors", {{1.0}}}}.dump(), "application/json");
  });
  ts.server.Post("/empty", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(Json{{"vectors", Json::array()}}.dump(),
                    "application/json");
  });
  ts.start();

  memory::EmbeddingSpec spec;
  spec.mode = memory::EmbeddingMode::Remote;
  spec.dimension = 3;
  spec.remote_endpoint = ts.url("/embed");
  const auto vecs = remote::embed_remote(spec, {"a", "b"});
  REQUIRE(vecs.size() == 2);
  CHECK(vecs[1] == std::vector<double>{1.0, 0.0, 1.0});
  CHECK(hits == 1);

  spec.remote_endpoint = ts.url("/short");
  CHECK_THROWS_AS(remote::embed_remote(spec, {"a"}), TransportError);
  spec.remote_endpoint = ts.url("/empty");
  CHECK_THROWS_AS(remote::embed_remote(spec, {"a"}), TransportError);

  CHECK_THROWS_AS(remote::embed_remote(spec, {}), ValidationError);
  spec.remote_endpoint.clear();
  CHECK_THROWS_AS(remote::embed_remote(spec, {"a"}), ValidationError);
  spec.mode = memory::EmbeddingMode::Deterministic;
  spec.remote_endpoint = "http://x/";
  CHECK_THROWS_AS(remote::embed_remote(spec, {"a"}), ValidationError);

  // the dispatcher falls back to the deterministic path without a server
  memory::EmbeddingSpec det;
  det.dimension = 64;
  CHECK(remote::embed(det, "alpha beta", {}) ==
        memory::embed_deterministic(det, "alpha beta", {}));
}

TEST_CASE("transient 5xx responses are retried, 4xx is terminal") {
  TestServer ts;
  std::atomic<int> flaky_hits{0}, bad_hits{0};
  ts.server.Post("/flaky", [&](const httplib::Request&,
                               httplib::Response& res) {
    if (++flaky_hits <= 2) {
      res.status = 503;
      return;
    }
    res.set_content(Json{{"ok", true}}.dump(), "application/json");
  });
  ts.server.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad_hits;
    res.status = 400;
  });
  ts.start();

  const Json reply = remote::post_json(ts.url("/flaky"), Json::object(), 5.0, 2);
  CHECK(reply.at("ok") == true);
  CHECK(flaky_hits == 3);

  try {
    remote::post_json(ts.url("/bad"), Json::object(), 5.0, 3);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 1);  // client errors are not retried
  }
  CHECK(bad_hits == 1);

  // exhausting retries reports the attempt count
  std::atomic<int> down_hits{0};
  ts.server.Post("/down", [&](const httplib::Request&, httplib::Response& res) {
    ++down_hits;
    res.status = 500;
  });
  try {
    remote::post_json(ts.url("/down"), Json::object(), 5.0, 1);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
  CHECK(down_hits == 2);
}

TEST_CASE("connection failures count attempts") {
  // a port nothing listens on
  try {
    remote::post_json("http://127.0.0.1:1/none", Json::object(), 0.5, 1);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
}

TEST_CASE("bearer token comes from the environment only") {
  TestServer ts;
  std::string seen_auth = "unset";
  ts.server.Post("/echo", [&](const httplib::Request& req,
                              httplib::Response& res) {
    seen_auth = req.has_header("Authorization")
                    ? req.get_header_value("Authorization")
                    : "";
    res.set_content("{}", "application/json");
  });
  ts.start();

  unsetenv("PHEWAS_REMOTE_TOKEN");
  remote::post_json(ts.url("/echo"), Json::object(), 5.0, 0);
  CHECK(seen_auth == "");
  setenv("PHEWAS_REMOTE_TOKEN", "sekrit", 1);
  remote::post_json(ts.url("/echo"), Json::object(), 5.0, 0);
  CHECK(seen_auth == "Bearer sekrit");
  unsetenv("PHEWAS_REMOTE_TOKEN");
}

namespace {

agent::AgentRole remote_lv_agent(const std::string& endpoint) {
  auto panel = agent::make_scripted_panel(1, 64);
  for (auto& a : panel)
    if (a.specialty == Structure::LV) {
      a.backend = agent::BackendKind::Remote;
      a.remote = agent::RemoteConfig{endpoint, 5.0, 0};
      return a;
    }
  throw std::runtime_error("no LV agent");
}

}  // namespace

TEST_CASE("remote opinions: wire protocol, hallucination stripping, fallback") {
  const auto catalog = build_default_catalog();
  TestServer ts;
  Json last_request;
  ts.server.Post("/opinion", [&](const httplib::Request& req,
                                 httplib::Response& res) {
    last_request = Json::parse(req.body);
    const Json reply = {
        {"recommended_phenotype_ids", {"LVEF", "NotAPhenotype"}},
        {"endorsed_associations",
         {{{"phenotype_id", "LVEF"}, {"factor_id", "age"},
           {"relevance", 0.7}},
          {{"phenotype_id", "MadeUp"}, {"factor_id", "age"},
           {"relevance", 0.9}}}},
        {"proposed_confounders", {"age"}},
        {"confidence", 0.8},
        {"rationale", "remote"}};
    res.set_content(reply.dump(), "application/json");
  });
  ts.start();

  auto a = remote_lv_agent(ts.url("/opinion"));
  agent::PhenotypeValuation val;
  val.agent_id = a.agent_id;
  agent::FactorEffectSet fx;
  fx.agent_id = a.agent_id;
  agent::DiscussionTranscript history;
  const auto transport = remote::make_http_transport();

  const auto outcome =
      agent::form_opinion(a, val, fx, history, 1, agent::Thresholds{}, catalog,
                          transport);
  CHECK(!outcome.fallback_used);
  CHECK(outcome.hallucination_count == 2);
  CHECK(outcome.opinion.recommended_phenotype_ids ==
        std::vector<std::string>{"LVEF"});
  REQUIRE(outcome.opinion.endorsed_associations.size() == 1);
  CHECK(outcome.opinion.endorsed_associations[0].relevance ==
        doctest::Approx(0.7));
  CHECK(outcome.opinion.proposed_confounders ==
        std::vector<std::string>{"age"});
  // the request carried the wire-protocol fields
  CHECK(last_request.at("role") == "specialist");
  CHECK(last_request.at("specialty") == "LV");
  CHECK(last_request.at("round") == 1);
  CHECK(last_request.contains("catalog_ids"));

  // an unreachable endpoint falls back to the scripted policy
  auto broken = remote_lv_agent("http://127.0.0.1:1/opinion");
  broken.remote->timeout_s = 0.5;
  const auto fb = agent::form_opinion(broken, val, fx, history, 1,
                                      agent::Thresholds{}, catalog, transport);
  CHECK(fb.fallback_used);
  CHECK(fb.opinion.agent_id == a.agent_id);
}

TEST_CASE("malformed remote opinions are rejected") {
  const auto catalog = build_default_catalog();
  auto a = remote_lv_agent("http://unused/");
  CHECK_THROWS_AS(
      agent::parse_remote_opinion(Json::array(), a, 1, catalog),
      ValidationError);
  Json bad = {{"recommended_phenotype_ids", Json::array()},
              {"endorsed_associations", Json::array()},
              {"proposed_confounders", Json::array()},
              {"confidence", 1.7},
              {"rationale", ""}};
  CHECK_THROWS_AS(agent::parse_remote_opinion(bad, a, 1, catalog),
                  ValidationError);
  bad["confidence"] = 0.5;
  bad["endorsed_associations"] = {{{"phenotype_id", "LVEF"},
                                   {"factor_id", "age"},
                                   {"relevance", 1.2}}};
  CHECK_THROWS_AS(agent::parse_remote_opinion(bad, a, 1, catalog),
                  ValidationError);
  // a fully valid minimal reply parses
  bad["endorsed_associations"] = Json::array();
  const auto ok = agent::parse_remote_opinion(bad, a, 3, catalog);
  CHECK(ok.opinion.round == 3);
  CHECK(ok.hallucination_count == 0);
}

TEST_CASE("a remote panel member inside the consensus loop") {
  const auto catalog = build_default_catalog();
  TestServer ts;
  ts.server.Post("/opinion", [&](const httplib::Request&,
                                 httplib::Response& res) {
    const Json reply = {{"recommended_phenotype_ids", {"LVEF"}},
                        {"endorsed_associations", Json::array()},
                        {"proposed_confounders", Json::array()},
                        {"confidence", 0.9},
                        {"rationale", "steady"}};
    res.set_content(reply.dump(), "application/json");
  });
  ts.start();

  auto panel = agent::make_scripted_panel(1, 64);
  for (auto& a : panel) {
    if (a.specialty == Structure::LV) {
      a.backend = agent::BackendKind::Remote;
      a.remote = agent::RemoteConfig{ts.url("/opinion"), 5.0, 0};
    } else {
      a.policy.fixed_recommendations = std::vector<std::string>{"RVEF"};
    }
  }
  consensus::PanelProducts products;
  for (const auto& a : panel) {
    if (a.is_coordinator()) continue;
    agent::PhenotypeValuation v;
    v.agent_id = a.agent_id;
    agent::FactorEffectSet e;
    e.agent_id = a.agent_id;
    products.valuations[a.agent_id] = v;
    products.effects[a.agent_id] = e;
  }
  consensus::ConsensusConfig config;
  const auto res = consensus::run_consensus(panel, products, {}, catalog,
                                            config,
                                            remote::make_http_transport());
  CHECK(res.converged);
  CHECK(res.transcript.rounds[0].fallback_agents.empty());
  std::set<std::string> finals(res.final_phenotype_ids.begin(),
                               res.final_phenotype_ids.end());
  CHECK(finals.count("RVEF") == 1);
}
