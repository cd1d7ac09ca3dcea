def reward_func(state, action, next_state):
    reward = -0.1
    done = False
    boxes_prev = get_entities_by_name(state, 'Box')
    targets_prev = get_entities_by_name(state, 'Target')
    boxes_next = get_entities_by_name(next_state, 'Box')
    targets_next = get_entities_by_name(next_state, 'Target')
    for box in boxes_next:
        if any(box.x == target.x and box.y == target.y for target in targets_next):
            if not any(box.x == prev_box.x and box.y == prev_box.y for prev_box in boxes_prev
                       if any(prev_box.x == prev_target.x and prev_box.y == prev_target.y for prev_target in targets_prev)):
                reward += 1
    for box in boxes_prev:
        if any(box.x == target.x and box.y == target.y for target in targets_prev):
            if not any(box.x == next_box.x and box.y == next_box.y for next_box in boxes_next
                       if any(next_box.x == next_target.x and next_box.y == next_target.y for next_target in targets_next)):
                reward -= 1
    if all(any(box.x == target.x and box.y == target.y for target in targets_next) for box in boxes_next):
        reward += 10
        done = True
    return reward, done
