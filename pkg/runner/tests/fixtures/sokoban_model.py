def transition(state, action):
    """
    Args:
        state: a set of entities representing the state of the environment
        action: the action can be "move right", "move left", "move up", "move down"
    Returns:
        next_state: the next state of the environment
    """
    # here we define how the player coordinates change for each action
    action_to_delta = {
        "move right": (1, 0),
        "move left": (-1, 0),
        "move up": (0, -1),
        "move down": (0, 1)
    }
    # Here we get the player and the boxes in the current state
    player = get_entities_by_name(state, 'Player')[0]
    boxes = get_entities_by_name(state, 'Box')
    walls = get_entities_by_name(state, 'Wall')
    # Then, we calculate the new player position according to the action
    delta_x, delta_y = action_to_delta[action]
    new_player_x = player.x + delta_x
    new_player_y = player.y + delta_y
    # We check if the new player position is a Wall
    if get_entities_by_position(walls, new_player_x, new_player_y):
        # If so, the player does not move
        pass
    else:
        # If not, the player moves to the new position
        pushed_box = get_entities_by_position(boxes, new_player_x, new_player_y)
        if pushed_box:
            pushed_box_x = pushed_box[0].x + delta_x
            pushed_box_y = pushed_box[0].y + delta_y
            # Check if there is a wall or other box at the pushed box destination
            if get_entities_by_position(boxes + walls, pushed_box_x, pushed_box_y):
                # If so, the player and the box do not move
                pass
            else:
                # If not, the box moves to the new position
                pushed_box[0].x += delta_x
                pushed_box[0].y += delta_y
                player.x += delta_x
                player.y += delta_y
        else:
            player.x += delta_x
            player.y += delta_y
    return state
