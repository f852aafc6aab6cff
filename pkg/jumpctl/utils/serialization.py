import os
import glob
import json
import torch

def mkdir(savepath):
    """
        returns `True` iff `savepath` is created
    """
    if not os.path.exists(savepath):
        os.makedirs(savepath)
        return True
    else:
        return False

def get_latest_iteration(loadpath):
    '''
        largest integer label among `state_*.pt` checkpoints, -1 if none;
        `state_final.pt` is not counted
    '''
    states = glob.glob(os.path.join(loadpath, 'state_*.pt'))
    latest = -1
    for state in map(os.path.basename, states):
        try:
            iteration = int(state.replace('state_', '').replace('.pt', ''))
        except ValueError:
            iteration = -1
        latest = max(iteration, latest)
    return latest

def checkpoint_path(loadpath, label='latest'):
    if label == 'latest':
        if os.path.exists(os.path.join(loadpath, 'state_final.pt')):
            label = 'final'
        else:
            label = get_latest_iteration(loadpath)
            if label < 0:
                raise FileNotFoundError(f'no checkpoint found in {loadpath}')
    return os.path.join(loadpath, f'state_{label}.pt')

def load_checkpoint(loadpath, label='latest'):
    path = checkpoint_path(loadpath, label)
    data = torch.load(path, map_location='cpu')
    print(f'[ utils/serialization ] Loaded checkpoint from {path}')
    return data

def save_json(data, *savepath):
    savepath = os.path.join(*savepath)
    mkdir(os.path.dirname(savepath) or '.')
    with open(savepath, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
    print(f'[ utils/serialization ] Saved json to {savepath}')
    return savepath

def load_json(*loadpath):
    loadpath = os.path.join(*loadpath)
    with open(loadpath, 'r') as f:
        return json.load(f)
