def reward_func(state, action, next_state):
    """
    Args:
        state: the state of the environment
        action: the action to be executed
        next_state: the next state of the environment
    Returns:
        reward: the reward of the action
        done: whether the episode is done
    """
    reward = 0.0
    done = False
    next_agent = get_entities_by_name(next_state, 'Agent')[0]
    on_goal = any(entity.name == 'Goal' for entity in
                  get_entities_by_position(next_state, next_agent.x, next_agent.y))
    if on_goal:
        reward = 1.0
        done = True
    return reward, done
