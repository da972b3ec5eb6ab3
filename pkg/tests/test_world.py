import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_world, obj
from manipqa.boxes import intersection_volume
from manipqa.world import (
    Action,
    ActionKind,
    Blocked,
    Heading,
    OutOfReach,
    Pose,
    SchemaError,
    Unaffordable,
    UnknownTarget,
    apply_action,
    dumps_world,
    is_visible,
    load_world,
    observe,
    save_world,
    world_from_dict,
    world_to_dict,
)


def fridge_world(agent=(2, 2), heading=Heading.NZ):
    # fridge against the z=0 wall in cells x 1..3, z 0..1; agent 1 m in front of its centre
    fridge = obj("Fridge_00", "Fridge", (0.27, 0.0, 0.02), (0.73, 1.8, 0.48))
    egg = obj("Egg_00", "Egg", (0.4, 0.5, 0.2), (0.5, 0.58, 0.3), parent_id="Fridge_00")
    return make_world([fridge, egg], agent=agent, heading=heading)


def test_closed_receptacle_hides_contents():
    w = fridge_world(agent=(2, 5))
    ids = {v.id for v in observe(w).visible}
    assert "Fridge_00" in ids
    assert "Egg_00" not in ids


def test_open_receptacle_reveals_contents():
    w = fridge_world(agent=(2, 3))
    opened = apply_action(w, Action(ActionKind.OPEN, "Fridge_00"))
    ids = {v.id for v in observe(opened).visible}
    assert {"Fridge_00", "Egg_00"} <= ids
    assert opened.objects["Fridge_00"].is_open
    assert not w.objects["Fridge_00"].is_open


def test_far_object_is_not_visible():
    lamp = obj("FloorLamp_00", "FloorLamp", (0.02, 0, 0.02), (0.23, 1.6, 0.23))
    w = make_world([lamp], size=(44, 44), agent=(43, 43), heading=Heading.NZ)
    assert observe(w).visible == ()
    # exhaustive check against the distance bound over the whole grid
    for i in range(0, 44, 3):
        for j in range(0, 44, 3):
            if w.occupancy()[i, j]:
                continue
            cx, cz = w.cell_center((i, j))
            far = ((cx - 0.125) ** 2 + (cz - 0.125) ** 2) ** 0.5 > 1.5
            for h in Heading:
                seen = is_visible(w, "FloorLamp_00", Pose((i, j), h))
                if far:
                    assert not seen


def test_field_of_view_excludes_objects_behind():
    w = fridge_world(agent=(2, 5), heading=Heading.PZ)
    assert observe(w).visible == ()


def test_observe_is_pure():
    w = fridge_world()
    assert observe(w) == observe(w)


def test_open_in_reach_and_idempotent():
    w = fridge_world(agent=(2, 2))
    once = apply_action(w, Action("Open", "Fridge_00"))
    twice = apply_action(once, Action("Open", "Fridge_00"))
    assert twice.objects == once.objects


def test_out_of_reach_and_unaffordable_and_unknown():
    book = obj("Book_00", "Book", (0.05, 0, 0.05), (0.2, 0.05, 0.2))
    w = make_world([book], size=(20, 20), agent=(12, 1))  # about 3 m away
    with pytest.raises(OutOfReach):
        apply_action(w, Action(ActionKind.PICKUP, "Book_00"))
    near = dataclasses.replace(w, agent=dataclasses.replace(w.agent, cell=(1, 1)))
    with pytest.raises(Unaffordable):
        apply_action(near, Action(ActionKind.OPEN, "Book_00"))
    with pytest.raises(UnknownTarget):
        apply_action(near, Action(ActionKind.OPEN, "Nope_00"))


def test_pickup_moves_object_to_inventory_and_clears_occupancy():
    box = obj("Box_00", "Box", (0.27, 0, 0.27), (0.48, 0.2, 0.48))
    pen = obj("Pen_00", "Pen", (0.3, 0.02, 0.3), (0.4, 0.05, 0.4), parent_id="Box_00")
    w = make_world([box, pen], agent=(2, 2))
    assert w.occupancy()[1, 1]
    after = apply_action(w, Action(ActionKind.PICKUP, "Box_00"))
    assert "Box_00" not in after.objects and "Pen_00" not in after.objects
    assert after.agent.inventory == ("Box_00",)
    assert not after.occupancy()[1, 1]
    assert len(after.objects) + len(after.carried) == len(w.objects)


def test_move_translates_by_one_cell_without_collision():
    chair = obj("Chair_00", "Chair", (0.52, 0, 0.52), (0.98, 0.9, 0.98))
    wall = obj("Shelf_00", "Shelf", (1.02, 0, 0.27), (1.48, 1.8, 1.23))
    w = make_world([chair, wall], agent=(1, 4))
    after = apply_action(w, Action(ActionKind.MOVE, "Chair_00"))
    old, new = w.objects["Chair_00"].box, after.objects["Chair_00"].box
    delta = [b - a for a, b in zip(old.min_corner, new.min_corner)]
    assert sorted(abs(d) for d in delta) == pytest.approx([0, 0, 0.25])
    assert new.extent == pytest.approx(old.extent)
    # collision oracle: the moved chair overlaps nothing else
    for o in after.objects.values():
        if o.id != "Chair_00":
            assert intersection_volume(new, o.box) == 0
    # +x is blocked by the shelf, so the first free direction in order is -x
    assert delta[0] == pytest.approx(-0.25)


def test_move_blocked_everywhere():
    chair = obj("Chair_00", "Chair", (0.02, 0, 0.02), (0.23, 0.9, 0.23))
    a = obj("Shelf_00", "Shelf", (0.27, 0, 0.02), (0.48, 1.8, 0.23))
    b = obj("Shelf_01", "Shelf", (0.02, 0, 0.27), (0.23, 1.8, 0.48))
    w = make_world([chair, a, b], size=(4, 4), agent=(1, 1))
    with pytest.raises(Blocked):
        apply_action(w, Action(ActionKind.MOVE, "Chair_00"))


def test_validate_catches_bad_parent_and_overlap():
    w = fridge_world()
    w.validate()
    bad = dataclasses.replace(w, objects={**w.objects, "Egg_00": dataclasses.replace(w.objects["Egg_00"], parent_id="Nope")})
    with pytest.raises(ValueError):
        bad.validate()
    twin = obj("Fridge_01", "Fridge", (0.27, 0.0, 0.02), (0.73, 1.8, 0.48))
    with pytest.raises(ValueError):
        dataclasses.replace(w, objects={**w.objects, "Fridge_01": twin}).validate()


def test_scene_file_round_trip(tmp_path):
    w = fridge_world()
    p = tmp_path / "scene.json"
    save_world(w, p)
    back = load_world(p)
    assert back.objects == w.objects
    assert back.agent == w.agent
    assert dumps_world(back) == p.read_text()


def test_scene_file_schema_errors(tmp_path):
    d = world_to_dict(fridge_world())
    with pytest.raises(SchemaError):
        world_from_dict({**d, "version": 99})
    del d["objects"][0]["type"]
    with pytest.raises(SchemaError):
        world_from_dict(d)
    p = tmp_path / "broken.json"
    p.write_text('{\n "version": 1,\n oops\n}')
    with pytest.raises(SchemaError) as exc:
        load_world(p)
    assert exc.value.line == 3


@given(st.sampled_from([Heading.PX, Heading.NX, Heading.PZ, Heading.NZ]), st.integers(0, 7), st.integers(2, 7))
def test_open_never_shrinks_the_visible_set(heading, i, j):
    w = fridge_world(agent=(i, j), heading=heading)
    if w.occupancy()[i, j]:
        return
    before = {v.id for v in observe(w).visible}
    opened = dataclasses.replace(w, objects={**w.objects, "Fridge_00": dataclasses.replace(w.objects["Fridge_00"], is_open=True)})
    assert before <= {v.id for v in observe(opened).visible}


@given(st.sampled_from(list(ActionKind)))
def test_actions_preserve_types_and_extents(kind):
    chair = obj("Chair_00", "Chair", (0.52, 0, 0.52), (0.98, 0.9, 0.98))
    box = obj("Box_00", "Box", (0.02, 0, 0.52), (0.23, 0.2, 0.73))
    w = make_world([chair, box], agent=(2, 4))
    for target in ("Chair_00", "Box_00"):
        try:
            after = apply_action(w, Action(kind, target))
        except Exception:
            continue
        everything = {**after.objects, **after.carried}
        assert set(everything) == set(w.objects)
        for oid, o in everything.items():
            assert o.obj_type == w.objects[oid].obj_type
            assert o.box.extent == pytest.approx(w.objects[oid].box.extent)


def test_scene_json_is_sorted_and_stable():
    w = fridge_world()
    text = dumps_world(w)
    assert json.loads(text)["objects"][0]["id"] == "Egg_00"
    assert text == dumps_world(world_from_dict(json.loads(text)))
