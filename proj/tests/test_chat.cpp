#include "doctest.h"
#include "support.hpp"
#include "ultraif/chat.hpp"
#include "ultraif/errors.hpp"

using namespace ultraif;

namespace {

ChatRequest minimal_request() {
    ChatRequest request;
    request.model_id = "m";
    request.messages = {{"user", "hi"}};
    request.temperature = 0.0;
    request.max_tokens = 64;
    request.n_samples = 1;
    return request;
}

}  // namespace

TEST_CASE("validate enforces the request invariants") {
    ChatRequest ok = minimal_request();
    CHECK_NOTHROW(ok.validate());

    ChatRequest bad = ok;
    bad.model_id.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    bad = ok;
    bad.messages.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    bad = ok;
    bad.messages[0].role = "robot";
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    bad = ok;
    bad.n_samples = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    bad = ok;
    bad.max_tokens = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    bad = ok;
    bad.temperature = -0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidRequest);

    ChatRequest system_first = ok;
    system_first.messages = {{"system", "be brief"}, {"user", "hi"}};
    CHECK_NOTHROW(system_first.validate());
}

TEST_CASE("canonical rendering is byte-stable and key-sorted") {
    ChatRequest request = minimal_request();
    CHECK(canonical_request(request) ==
          R"({"max_tokens":64,"messages":[{"content":"hi","role":"user"}],"model":"m","n":1,"temperature":0.0})");

    // Frozen fingerprints pin both the canonical bytes and the hash.
    CHECK(fingerprint(request) ==
          "00a1d614472c560721292b5e97b7ec1fd13513091a89c93bda1e07651aac23e2");

    request.seed_hint = 7;
    CHECK(fingerprint(request) ==
          "d3cdbf81da10b135aec33f1320efaeec17089dad2367cd5bd39f3c010dd86acc");
}

TEST_CASE("integral temperatures render with a decimal point") {
    ChatRequest request = minimal_request();
    request.temperature = 1.0;
    auto canon = canonical_request(request);
    CHECK(canon.find("\"temperature\":1.0") != std::string::npos);
}

TEST_CASE("logically equal requests share a fingerprint; different ones do not") {
    ChatRequest a = minimal_request();
    ChatRequest b = minimal_request();
    CHECK(fingerprint(a) == fingerprint(b));

    b.seed_hint = 1;
    CHECK(fingerprint(a) != fingerprint(b));

    b = minimal_request();
    b.messages[0].content = "hi ";
    CHECK(fingerprint(a) != fingerprint(b));

    b = minimal_request();
    b.n_samples = 2;
    CHECK(fingerprint(a) != fingerprint(b));
}

TEST_CASE("response JSON round-trips") {
    ChatResponse response = testsupport::canned({"one", "two"});
    response.backend_id = "http:test";
    ChatResponse back = response_from_json(response_to_json(response));
    CHECK(back == response);
}
