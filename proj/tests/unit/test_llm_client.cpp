#include <gtest/gtest.h>

#include <cstdlib>

#include "pgg/llm.hpp"
#include "pgg/mock_server.hpp"

using namespace std::chrono_literals;

namespace {

pgg::EndpointConfig fast_endpoint(const std::string& url) {
  pgg::EndpointConfig ep;
  ep.base_url = url;
  ep.backoff_initial = 1ms;
  ep.request_timeout = 2000ms;
  ep.auth_token_env = "PGG_TEST_TOKEN_UNSET";
  return ep;
}

pgg::ChatTranscript one_turn() {
  pgg::ChatTranscript t("rules");
  t.add_user("Round 1 of 5: how many tokens?");
  return t;
}

pgg::Observation first_round() {
  pgg::Observation o;
  o.round_index = 1;
  o.total_rounds = 5;
  o.endowment = 10;
  o.num_agents = 4;
  return o;
}

}  // namespace

TEST(Playlist, LineSyntax) {
  auto p = pgg::Playlist::from_lines({"# comment", "!status 500", "!malformed", "line one\\nline two", "", "7"});
  ASSERT_EQ(p.size(), 4u);
  auto r = p.next();
  EXPECT_EQ(r.status, 500);
  r = p.next();
  EXPECT_TRUE(r.malformed);
  EXPECT_EQ(p.next().content, "line one\nline two");
  EXPECT_EQ(p.next().content, "7");
  // exhausted: the last entry repeats
  EXPECT_EQ(p.next().content, "7");
  EXPECT_EQ(p.next().content, "7");
}

TEST(MockClient, ServerErrorThenSuccessRetriesOnce) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 500", "3"}));
  server.start();
  pgg::ChatClient client(fast_endpoint(server.base_url()));
  EXPECT_EQ(client.complete(one_turn()), "3");
  EXPECT_EQ(server.request_count(), 2u);
  EXPECT_EQ(client.http_requests(), 2u);
}

TEST(MockClient, RateLimitAndMalformedAreRetried) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 429", "!malformed", "8"}));
  server.start();
  pgg::ChatClient client(fast_endpoint(server.base_url()));
  EXPECT_EQ(client.complete(one_turn()), "8");
  EXPECT_EQ(server.request_count(), 3u);
}

TEST(MockClient, ClientErrorFailsImmediately) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 401", "3"}));
  server.start();
  pgg::ChatClient client(fast_endpoint(server.base_url()));
  EXPECT_THROW(client.complete(one_turn()), pgg::TransportError);
  EXPECT_EQ(server.request_count(), 1u);
}

TEST(MockClient, RetriesAreBounded) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 503"}));
  server.start();
  auto ep = fast_endpoint(server.base_url());
  ep.max_transport_retries = 2;
  pgg::ChatClient client(ep);
  EXPECT_THROW(client.complete(one_turn()), pgg::TransportError);
  EXPECT_EQ(server.request_count(), 3u);
}

TEST(MockClient, UnreachableHostIsTransportError) {
  int port = 0;
  {
    // grab a free port, then release it
    pgg::MockServer probe(pgg::Playlist::from_lines({"1"}));
    probe.start();
    port = probe.port();
  }
  auto ep = fast_endpoint("http://127.0.0.1:" + std::to_string(port));
  ep.max_transport_retries = 1;
  pgg::ChatClient client(ep);
  try {
    client.complete(one_turn());
    FAIL() << "expected TransportError";
  } catch (const pgg::TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("127.0.0.1"), std::string::npos);
  }
  EXPECT_EQ(client.http_requests(), 2u);
}

TEST(MockClient, BearerTokenComesFromEnvironment) {
  pgg::MockServer server(pgg::Playlist::from_lines({"3"}));
  server.start();
  ::setenv("PGG_TEST_TOKEN", "sk-test-123", 1);
  auto ep = fast_endpoint(server.base_url());
  ep.auth_token_env = "PGG_TEST_TOKEN";
  pgg::ChatClient client(ep);
  client.complete(one_turn());
  EXPECT_EQ(server.last_authorization(), "Bearer sk-test-123");
  ::unsetenv("PGG_TEST_TOKEN");

  pgg::ChatClient anonymous(fast_endpoint(server.base_url()));
  anonymous.complete(one_turn());
  EXPECT_EQ(server.last_authorization(), "");
}

TEST(LlmAgent, ReminderAfterUnparsableReply) {
  pgg::MockServer server(pgg::Playlist::from_lines({"I am not sure yet.", "I contribute 4 tokens."}));
  server.start();
  auto client = std::make_shared<pgg::ChatClient>(fast_endpoint(server.base_url()));
  pgg::LlmAgent agent(client, "rules");
  pgg::Rng rng(1);
  EXPECT_EQ(agent.decide(first_round(), rng), 4);
  EXPECT_EQ(agent.requests(), 2u);
  const auto& msgs = agent.transcript().messages();
  ASSERT_EQ(msgs.size(), 5u);
  EXPECT_NE(msgs[3].content.find("could not be read"), std::string::npos);
  EXPECT_TRUE(pgg::ChatTranscript::well_formed(msgs));
  EXPECT_EQ(agent.spec(), "llm:meta-llama-3.1-70b-instruct-fp8");
}

TEST(LlmAgent, GivesUpAfterParseRetries) {
  pgg::MockServer server(pgg::Playlist::from_lines({"no idea"}));
  server.start();
  auto ep = fast_endpoint(server.base_url());
  ep.max_parse_retries = 2;
  auto client = std::make_shared<pgg::ChatClient>(ep);
  pgg::LlmAgent agent(client, "rules");
  pgg::Rng rng(1);
  try {
    agent.decide(first_round(), rng);
    FAIL() << "expected AgentFailure";
  } catch (const pgg::AgentFailure& e) {
    EXPECT_EQ(std::string(e.what()).rfind("unparsable", 0), 0u);
  }
  EXPECT_EQ(server.request_count(), 3u);
}

TEST(LlmAgent, TransportFailureBecomesAgentFailure) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 404"}));
  server.start();
  auto client = std::make_shared<pgg::ChatClient>(fast_endpoint(server.base_url()));
  pgg::LlmAgent agent(client, "rules");
  pgg::Rng rng(1);
  try {
    agent.decide(first_round(), rng);
    FAIL() << "expected AgentFailure";
  } catch (const pgg::AgentFailure& e) {
    EXPECT_EQ(std::string(e.what()).rfind("transport", 0), 0u);
  }
}
