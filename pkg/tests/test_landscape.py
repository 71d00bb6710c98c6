import pytest

from ffsipp import landscape
from ffsipp.landscape import (
    AND_BLOCK,
    DONE,
    REPEAT_LOOP,
    SEQUENCE,
    SKIPPED,
    STEP,
    XOR_BLOCK,
    ScenarioError,
    advance_loops,
    apply_xor_choice,
    average_makespan,
    enumerate_paths,
    next_steps,
    parse_scenario,
    parse_structure,
    pending_xor_choices,
    step_deadline,
)

from .conftest import instance, preset_text


class TestParseStructure:
    def test_sequence(self):
        root = parse_structure("s,s,s")
        assert root.kind == SEQUENCE
        assert [c.kind for c in root.children] == [STEP] * 3

    def test_blocks_and_loop(self):
        root = parse_structure("s,AND(s|s),LOOP*3(s)")
        kinds = [c.kind for c in root.children]
        assert kinds == [STEP, AND_BLOCK, REPEAT_LOOP]
        assert root.children[2].repetitions == 3

    def test_nested(self):
        root = parse_structure("s,AND(s,s|XOR(s|s)),s")
        block = root.children[1]
        assert block.kind == AND_BLOCK
        assert len(block.children) == 2
        assert block.children[1].kind == XOR_BLOCK

    def test_step_counts_match_preset_models(self):
        counts = {
            "s,s,s": 3,
            "XOR(s|s)": 2,
            "s,AND(s|s)": 3,
            "s,AND(s|s),s,AND(s,s|s),s": 8,
            "s,XOR(s|s)": 3,
            "s,AND(s,s|s),s,XOR(s,s|s),s": 9,
            "s,s,s,s,s,s,s,s": 8,
            "AND(s|s),s": 3,
            "s,AND(s|s),LOOP*3(s)": 4,
        }
        for text, n in counts.items():
            model = landscape.ProcessModel(id=1, root=parse_structure(text))
            assert len(model.step_nodes) == n, text

    def test_garbage_rejected(self):
        with pytest.raises(ScenarioError):
            parse_structure("s,AND(s|")


class TestWorkflowSemantics:
    def test_sequence_progression(self, abc_services):
        inst = instance("s,s,s", abc_services, ["A", "B", "C"])
        assert next_steps(inst) == {0}
        inst.steps[0].status = DONE
        assert next_steps(inst) == {1}

    def test_and_split_exposes_both_heads(self, abc_services):
        inst = instance("s,AND(s|s)", abc_services, ["A", "B", "C"])
        inst.steps[0].status = DONE
        assert next_steps(inst) == {1, 2}

    def test_xor_blocks_until_choice(self, abc_services):
        inst = instance("XOR(s|s)", abc_services, ["A", "B"])
        assert next_steps(inst) == set()
        assert pending_xor_choices(inst) == [0]
        apply_xor_choice(inst, 0, 1)
        assert next_steps(inst) == {1}
        assert inst.steps[0].status == SKIPPED

    def test_loop_restarts_body(self, abc_services):
        inst = instance("LOOP*3(s)", abc_services, ["A"])
        inst.steps[0].status = DONE
        restarted = advance_loops(inst)
        assert restarted and restarted[0][1] == [0]
        assert inst.steps[0].status != DONE
        assert inst.loop_iters_done[restarted[0][0]] == 1

    def test_loop_respects_sampled_iterations(self, abc_services):
        inst = instance("LOOP*3(s)", abc_services, ["A"])
        loop_id = enumerate_paths(inst.model).loops[0][0]
        inst.loop_planned[loop_id] = 1
        inst.steps[0].status = DONE
        assert advance_loops(inst) == []
        assert inst.done


class TestDerivedQuantities:
    def test_path_decomposition(self, abc_services):
        inst = instance("s,AND(s|s)", abc_services, ["A", "A", "C"])
        dec = enumerate_paths(inst.model)
        assert dec.seq_steps == [0]
        assert dec.and_blocks[0][1] == [[1], [2]]

    def test_average_makespan_composition(self, abc_services):
        seq = instance("s,s,s", abc_services, ["A", "B", "C"]).model
        assert average_makespan(seq, abc_services) == 240.0
        par = instance("AND(s|s)", abc_services, ["A", "C"]).model
        assert average_makespan(par, abc_services) == 120.0
        loop = instance("LOOP*3(s)", abc_services, ["A"]).model
        assert average_makespan(loop, abc_services) == 120.0

    def test_step_deadline_last_step(self, abc_services):
        inst = instance("s", abc_services, ["A"], deadline_ms=1_000_000)
        assert step_deadline(inst, 0, abc_services, 60_000) == 868_000

    def test_step_deadline_can_be_past(self, abc_services):
        inst = instance("s,s,s", abc_services, ["C", "C", "C"], deadline_ms=100_000)
        assert step_deadline(inst, 0, abc_services, 60_000) < 0


class TestParseScenario:
    def test_presets_parse(self):
        for name in (
            "constant_strict_intense",
            "pyramid_lenient_light",
            "smoke",
        ):
            sc = parse_scenario(preset_text(name))
            assert sc.models and sc.services and sc.vm_types

    def test_missing_models_rejected(self):
        text = preset_text("smoke").replace("models:", "not_models:")
        with pytest.raises(ScenarioError):
            parse_scenario(text)

    def test_dangling_service_rejected(self):
        text = preset_text("smoke").replace(
            '{id: 1, structure: "s,s,s"}',
            '{id: 1, structure: "s,s,s", steps: [A, B, Q]}',
        )
        with pytest.raises(ScenarioError):
            parse_scenario(text)
