"""Response variants: reply cleanup, provenance naming, edit/generate flows."""

from __future__ import annotations

import pytest

from emfact.editor import (
    EDIT_MODES,
    HUMAN_MODEL_ID,
    PROV_DIRECT,
    PROV_EDITED_REFINED,
    PROV_EDITED_SIMPLE,
    PROV_PHYSICIAN,
    EditError,
    ResponseVariant,
    clean_reply,
    direct_variant,
    edited_variant,
    level_provenance,
    physician_variant,
)
from emfact.prompts import load_template

from conftest import make_corpus, rules_gateway


class TestCleanReply:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("plain text", "plain text"),
            ("  padded  ", "padded"),
            ('"quoted response"', "quoted response"),
            ("'single quoted'", "single quoted"),
            ("“curly quoted”", "curly quoted"),
            ("```\nfenced body\n```", "fenced body"),
            ("```text\nfenced with language\n```", "fenced with language"),
            ("Here is the revised response:\nactual content", "actual content"),
            ("Sure! Here you go:\nkept lead-in stays.", "Sure! Here you go:\nkept lead-in stays."),
            ('```\n"both fence and quotes"\n```', "both fence and quotes"),
            ("Revised:\n\nbody after blank line", "body after blank line"),
        ],
    )
    def test_cleanup_cases(self, raw, expected):
        assert clean_reply(raw) == expected

    def test_interior_quotes_kept(self):
        text = 'She said "hello" to the patient.'
        assert clean_reply(text) == text

    def test_unbalanced_quote_kept(self):
        assert clean_reply('"starts with quote only') == '"starts with quote only'

    def test_single_character_not_dequoted(self):
        assert clean_reply('"') == '"'

    def test_colon_line_with_sentence_punctuation_kept(self):
        text = "Dr. notes the following:\ndetails"
        assert clean_reply(text) == text

    @pytest.mark.parametrize("raw", ["", "   ", '""', "```\n\n```"])
    def test_empty_after_cleanup(self, raw):
        with pytest.raises(EditError):
            clean_reply(raw)

    def test_lone_colon_line_is_kept_as_content(self):
        # With nothing underneath it there is no body to prefer, so the
        # line itself is all we have.
        assert clean_reply("Lead-in only:\n   ") == "Lead-in only:"

    def test_lead_in_before_fence(self):
        raw = "Here is the revision:\n```\nfenced body\n```"
        assert clean_reply(raw) == "fenced body"


class TestProvenance:
    @pytest.mark.parametrize(
        "mode,level,expected",
        [
            ("simple", "standard", PROV_EDITED_SIMPLE),
            ("refined", "standard", PROV_EDITED_REFINED),
            ("simple", "high", "edited_level:high"),
            ("simple", "extreme", "edited_level:extreme"),
        ],
    )
    def test_mapping(self, mode, level, expected):
        assert level_provenance(mode, level) == expected

    def test_refined_rejects_levels(self):
        with pytest.raises(EditError):
            level_provenance("refined", "high")

    def test_unknown_mode_and_level(self):
        with pytest.raises(EditError):
            level_provenance("fancy", "standard")
        with pytest.raises(EditError):
            level_provenance("simple", "super")

    def test_mode_vocabulary(self):
        assert EDIT_MODES == ("simple", "refined")


class TestVariantRecords:
    def test_round_trip(self):
        v = ResponseVariant(
            exchange_id="e1",
            provenance=PROV_EDITED_SIMPLE,
            text="text",
            model_id="m",
            template_name="simple_edit",
            empathy_level="standard",
        )
        assert ResponseVariant.from_record(v.to_record()) == v

    def test_optional_fields_default(self):
        v = ResponseVariant.from_record(
            {"exchange_id": "e", "provenance": "physician", "text": "t", "model_id": "human"}
        )
        assert v.template_name is None
        assert v.empathy_level is None


class TestVariantConstruction:
    def test_physician_variant(self):
        exchange = make_corpus(1)[0]
        v = physician_variant(exchange)
        assert v.provenance == PROV_PHYSICIAN
        assert v.model_id == HUMAN_MODEL_ID
        assert v.text == exchange.physician_response

    def test_edited_variant_echo_identity(self):
        exchange = make_corpus(1)[0]
        gw = rules_gateway([{"tag": "edit", "echo_after": "Physician's response:"}])
        v = edited_variant(gw, load_template("simple_edit"), exchange, "edit-m", mode="simple")
        assert v.text == exchange.physician_response
        assert v.provenance == PROV_EDITED_SIMPLE
        assert v.template_name == "simple_edit"
        assert v.empathy_level == "standard"

    def test_edited_variant_cleans_reply(self):
        exchange = make_corpus(1)[0]
        gw = rules_gateway(
            [{"tag": "edit", "reply": 'Here is the revised response:\n"I am so sorry to hear."'}]
        )
        v = edited_variant(gw, load_template("simple_edit"), exchange, "m", mode="simple")
        assert v.text == "I am so sorry to hear."

    def test_edited_variant_level_provenance(self):
        exchange = make_corpus(1)[0]
        gw = rules_gateway([{"tag": "edit", "reply": "warm words"}])
        v = edited_variant(
            gw, load_template("simple_edit"), exchange, "m", mode="simple", level="extreme"
        )
        assert v.provenance == "edited_level:extreme"
        assert v.empathy_level == "extreme"

    def test_edited_variant_empty_reply_names_exchange(self):
        exchange = make_corpus(1)[0]
        gw = rules_gateway([{"tag": "edit", "reply": "  "}])
        with pytest.raises(EditError, match=exchange.exchange_id):
            edited_variant(gw, load_template("simple_edit"), exchange, "m", mode="simple")

    def test_direct_variant(self):
        exchange = make_corpus(1)[0]
        gw = rules_gateway([{"tag": "generate", "reply": "Drink fluids and rest."}])
        v = direct_variant(gw, load_template("direct_generate"), exchange, "gen-m")
        assert v.provenance == PROV_DIRECT
        assert v.model_id == "gen-m"
        assert v.text == "Drink fluids and rest."
        assert v.empathy_level is None
