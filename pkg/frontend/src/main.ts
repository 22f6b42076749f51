/** App shell: Train / Studio tabs over one ApiClient. */

import { ApiClient } from './api.js';
import { h, replaceChildren } from './dom.js';
import { StudioView } from './views/studio.js';
import { TrainView } from './views/train.js';

export function bootstrap(root: HTMLElement, api: ApiClient = new ApiClient()): void {
  const studio = new StudioView(api);
  const train = new TrainView(api, () => void studio.refresh());

  const content = h('main', {});
  const tabs = h('nav', { class: 'tabs' },
    h('button', { class: 'tab', onClick: () => show('train') }, 'Train'),
    h('button', { class: 'tab', onClick: () => show('studio') }, 'Studio'),
  );

  function show(which: 'train' | 'studio'): void {
    if (which === 'train') {
      replaceChildren(content, train.root);
    } else {
      replaceChildren(content, studio.root);
      void studio.refresh();
    }
  }

  replaceChildren(root, h('h1', {}, 'portraitforge'), tabs, content);
  show('train');
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  bootstrap(document.getElementById('app')!);
}
